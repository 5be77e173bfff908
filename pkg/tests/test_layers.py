"""Embedding, LSTM cell, and bidirectional LSTM."""

import math

import numpy as np
import pytest

from hredlab import tensor as T
from hredlab.errors import ContractError, DimensionError
from hredlab.gradcheck import grad_check
from hredlab.layers import EmbeddingTable, LstmParams, bilstm, embed, lstm_cell
from hredlab.params import ParameterRegistry
from hredlab.tensor import Tensor
from hredlab.training import Adagrad


def lstm_params(gen, in_dim, d, scale=0.5, zero=False, prefix="p"):
    reg = ParameterRegistry()
    if zero:
        W, U, b = np.zeros((4 * d, in_dim)), np.zeros((4 * d, d)), np.zeros(4 * d)
    else:
        W, U, b = (gen.normal(size=s) * scale for s in [(4 * d, in_dim), (4 * d, d), (4 * d,)])
    return LstmParams.register(reg, prefix, W, U, b, trainable=True), reg


def reference_cell(W, U, b, x, h, c):
    """Gate equations written out per gate."""
    d = h.shape[-1]
    z = W @ x + U @ h + b
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, g, o = sig(z[:d]), sig(z[d:2 * d]), np.tanh(z[2 * d:3 * d]), sig(z[3 * d:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


class TestEmbedding:
    def test_same_id_same_row(self, gen):
        table = EmbeddingTable(Tensor(gen.normal(size=(6, 3)), requires_grad=True))
        out = embed(table, np.array([4, 4])).data
        np.testing.assert_array_equal(out[0], out[1])

    def test_gradient_only_to_looked_up_rows(self, gen):
        w = Tensor(gen.normal(size=(6, 3)), requires_grad=True)
        T.backward(T.tsum(embed(EmbeddingTable(w), np.array([2, 2, 5])) * 1.5))
        assert np.all(w.grad[[0, 1, 3, 4]] == 0)
        np.testing.assert_allclose(w.grad[2], 3.0)
        np.testing.assert_allclose(w.grad[5], 1.5)

    def test_adagrad_step_moves_only_touched_row(self, gen):
        reg = ParameterRegistry()
        w = reg.add("embedding.weight", gen.normal(size=(6, 3)))
        before = w.data.copy()
        T.backward(T.tsum(embed(EmbeddingTable(w), np.array([3])) ** 2))
        Adagrad(reg).step()
        changed = np.any(w.data != before, axis=1)
        assert changed.tolist() == [False, False, False, True, False, False]

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            embed(EmbeddingTable(Tensor(np.zeros((4, 2)))), np.array([4]))


class TestLstmCell:
    def test_all_zero(self):
        p, _ = lstm_params(None, 3, 2, zero=True)
        h, c = lstm_cell(p, np.zeros(3), np.zeros(2), np.zeros(2))
        assert np.all(h.data == 0) and np.all(c.data == 0)

    def test_closed_form_unit_cell(self):
        reg = ParameterRegistry()
        p = LstmParams.register(reg, "p", np.ones((4, 1)), np.ones((4, 1)), np.zeros(4), True)
        h, c = lstm_cell(p, np.zeros(1), np.zeros(1), np.ones(1))
        # i = f = o = sigmoid(0) = 0.5, g = 0: c' = 0.5, h' = 0.5 tanh(0.5)
        assert c.data[0] == pytest.approx(0.5, abs=1e-15)
        assert h.data[0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)
        assert h.data[0] == pytest.approx(0.23106, abs=1e-5)

    def test_matches_reference_gates(self, gen):
        p, _ = lstm_params(gen, 3, 4)
        x, h, c = gen.normal(size=3), gen.normal(size=4), gen.normal(size=4)
        h2, c2 = lstm_cell(p, x, h, c)
        rh, rc = reference_cell(p.W.data, p.U.data, p.b.data, x, h, c)
        np.testing.assert_allclose(h2.data, rh, atol=1e-14)
        np.testing.assert_allclose(c2.data, rc, atol=1e-14)

    def test_parameter_count(self, gen):
        _, reg = lstm_params(gen, 5, 3)
        assert reg.num_values() == 4 * (5 * 3 + 3 * 3 + 3)

    def test_dimension_mismatch(self, gen):
        p, _ = lstm_params(gen, 3, 2)
        with pytest.raises(DimensionError):
            lstm_cell(p, np.zeros(4), np.zeros(2), np.zeros(2))

    def test_grad_check(self, gen):
        p, _ = lstm_params(gen, 3, 4)
        x, h, c = (Tensor(gen.normal(size=n), requires_grad=True) for n in (3, 4, 4))
        proj = Tensor(gen.normal(size=4))

        def f():
            h2, c2 = lstm_cell(p, x, h, c)
            return T.tsum(h2 * proj) + T.tsum(c2 * c2)

        rep = grad_check(f, [p.W, p.U, p.b, x, h, c])
        assert rep.passed, str(rep)


class TestBiLstm:
    def test_single_step_state_equals_final(self, gen):
        pf, _ = lstm_params(gen, 3, 2)
        pb, _ = lstm_params(gen, 3, 2)
        states, final = bilstm(pf, pb, Tensor(gen.normal(size=(1, 3))))
        np.testing.assert_array_equal(states.data[0], final.data)

    def test_zero_params_zero_final(self, gen):
        pf, _ = lstm_params(gen, 3, 2, zero=True)
        pb, _ = lstm_params(gen, 3, 2, zero=True)
        _, final = bilstm(pf, pb, Tensor(gen.normal(size=(5, 3))))
        assert np.all(final.data == 0)

    def test_final_is_last_forward_and_first_backward(self, gen):
        pf, _ = lstm_params(gen, 3, 2)
        pb, _ = lstm_params(gen, 3, 2)
        states, final = bilstm(pf, pb, Tensor(gen.normal(size=(4, 3))))
        np.testing.assert_array_equal(final.data[:2], states.data[-1, :2])
        np.testing.assert_array_equal(final.data[2:], states.data[0, 2:])

    def test_padding_matches_truncated_run(self, gen):
        pf, _ = lstm_params(gen, 3, 4)
        pb, _ = lstm_params(gen, 3, 4)
        xs = gen.normal(size=(2, 6, 3))
        lengths = [6, 3]
        mask = np.arange(6)[None, :] < np.array(lengths)[:, None]
        states, final = bilstm(pf, pb, Tensor(xs), mask)
        for b, n in enumerate(lengths):
            s1, f1 = bilstm(pf, pb, Tensor(xs[b, :n]))
            np.testing.assert_allclose(final.data[b], f1.data, atol=1e-15)
            np.testing.assert_allclose(states.data[b, :n], s1.data, atol=1e-15)

    def test_empty_sequence(self, gen):
        pf, _ = lstm_params(gen, 3, 2)
        with pytest.raises(ContractError):
            bilstm(pf, pf, Tensor(np.zeros((0, 3))))

    def test_grad_check(self, gen):
        pf, _ = lstm_params(gen, 3, 3)
        pb, _ = lstm_params(gen, 3, 3, prefix="q")
        xs = Tensor(gen.normal(size=(2, 4, 3)), requires_grad=True)
        mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], bool)
        proj = Tensor(gen.normal(size=6))

        def f():
            states, final = bilstm(pf, pb, xs, mask)
            return T.tsum(final * proj) + T.tsum(states * states) * 0.1

        rep = grad_check(f, [*pf.tensors, *pb.tensors, xs])
        assert rep.passed, str(rep)
