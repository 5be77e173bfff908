"""Relative weight change, histograms, and gap percentages."""

import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hredlab.diagnostics import (
    HISTOGRAM_HEADER,
    WEIGHT_CHANGE_HEADER,
    relative_gap,
    relative_weight_change,
    report_gap,
    weight_histogram,
    write_histogram_csv,
    write_weight_change_csv,
)
from hredlab.errors import ContractError, DegenerateInputError
from hredlab.encoder import EncoderVariant, VariantKind, init_encoder
from hredlab.params import ParameterRegistry


def rwc_oracle(before, after, threshold=1e-12):
    total, count = 0.0, 0
    for b, a in zip(before, after):
        if abs(b) >= threshold:
            total += abs((a - b) / b)
            count += 1
    return total / count


class TestRelativeWeightChange:
    def test_hand_example(self):
        assert relative_weight_change([1.0, 2.0], [1.1, 1.8]) == pytest.approx(0.1, abs=1e-15)

    def test_unchanged(self, gen):
        w = gen.normal(size=50)
        assert relative_weight_change(w, w.copy()) == 0.0

    def test_zero_coordinates_excluded(self):
        assert relative_weight_change([0.0, 2.0], [5.0, 3.0]) == 0.5

    def test_all_zero(self):
        with pytest.raises(DegenerateInputError):
            relative_weight_change([0.0, 0.0], [1.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            relative_weight_change([1.0], [1.0, 2.0])

    def test_oracle(self, gen):
        for _ in range(200):
            n = int(gen.integers(1, 60))
            # parameter-like snapshots, with some exact and sub-threshold zeros
            before = gen.uniform(-0.1, 0.1, size=n) * gen.choice([0.0, 1e-13, 1.0, 1.0, 1.0], size=n)
            after = before * (1 + gen.normal(size=n) * 0.05) + gen.normal(size=n) * 1e-3
            if not np.any(np.abs(before) >= 1e-12):
                continue
            assert abs(relative_weight_change(before, after) - rwc_oracle(before, after)) <= 1e-12


class TestHistogram:
    def test_constant_group_single_bin(self):
        h = weight_histogram(np.full(20, 0.3))
        assert h.occupied_bins == 1 and h.counts.sum() == 20

    def test_default_bins(self, gen):
        h = weight_histogram(gen.normal(size=100))
        assert len(h.counts) == 101 and len(h.edges) == 102

    def test_uniform_init_within_bounds(self):
        reg = ParameterRegistry()
        init_encoder(EncoderVariant(VariantKind.RANDOM, 256, 0), reg, 16)
        h = weight_histogram(reg.flat("sentence_encoder"))
        assert -0.0625 <= h.min and h.max <= 0.0625

    def test_reservoir_moments(self):
        reg = ParameterRegistry()
        init_encoder(EncoderVariant(VariantKind.ESN, 100, 0), reg, 8)
        values = np.concatenate([reg["document_encoder.fwd.W_rec"].data.ravel()])
        assert values.size == 10_000
        h = weight_histogram(values)
        assert abs(h.mean) < 0.05 and abs(h.std - 1) < 0.05

    def test_empty(self):
        with pytest.raises(ContractError):
            weight_histogram([])


class TestGap:
    def test_table_rows(self):
        assert relative_gap(18.03, 14.81) == pytest.approx(21.742, abs=1e-3)
        assert report_gap(18.03, 14.81) == 22
        assert report_gap(22.75, 15.66) == 45

    def test_rouge_gap(self):
        assert report_gap(35.72, 34.51, decimals=1, mode="truncate") == 3.5

    def test_half_up_vs_truncate(self):
        # 100 * (1.0845 - 1) / 1 = 8.45 exactly in decimal
        assert report_gap(1.0845, 1.0, decimals=1) == 8.5
        assert report_gap(1.0845, 1.0, decimals=1, mode="truncate") == 8.4

    def test_nonpositive_baseline(self):
        for b in (0.0, -1.0):
            with pytest.raises(ContractError):
                relative_gap(1.0, b)

    @given(st.floats(1e-6, 1e6))
    def test_self_gap_zero(self, x):
        assert relative_gap(x, x) == 0.0


class TestCsv:
    def test_weight_change_schema(self):
        buf = io.StringIO()
        write_weight_change_csv(buf, {"decoder": [(100, 0.5), (200, 0.25)]}, {"seed": 3})
        lines = buf.getvalue().splitlines()
        assert json.loads(lines[0][2:]) == {"seed": 3}
        rows = list(csv.reader(lines[1:]))
        assert tuple(rows[0]) == WEIGHT_CHANGE_HEADER
        assert rows[1:] == [["decoder", "100", "0.5"], ["decoder", "200", "0.25"]]

    def test_histogram_schema(self, gen):
        buf = io.StringIO()
        write_histogram_csv(buf, {("embedding", "weight"): weight_histogram(gen.normal(size=30), bins=5)})
        rows = list(csv.reader(buf.getvalue().splitlines()))
        assert tuple(rows[0]) == HISTOGRAM_HEADER
        assert len(rows) == 6 and sum(int(r[4]) for r in rows[1:]) == 30
