"""Finite-difference verification of autodiff gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad

# Coordinates whose true gradient is this small are compared absolutely:
# with step 1e-5 the central difference carries ~1e-10 noise.
ABS_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    tol: float
    names: list[str] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max()) if self.rel_error.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def failures(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.rel_error >= self.tol)]

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"grad_check {status}: {self.rel_error.size} coords, max rel err {self.max_rel_error:.3e}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_FLOOR)
    return np.abs(analytic - numeric) / scale


def grad_check(
    f: Callable[[], Tensor] | Callable[[Tensor], Tensor],
    x: Tensor | Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autodiff gradients of scalar ``f`` against central differences.

    ``x`` is a single tensor (``f`` takes it as its argument) or a list of
    tensors that ``f()`` closes over. Every coordinate of every tensor is
    perturbed unless ``max_coords`` caps the count, in which case a seeded
    random subset is checked.
    """
    single = isinstance(x, Tensor)
    tensors = [x] if single else list(x)
    call = (lambda: f(tensors[0])) if single else f

    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    loss = call()
    backward(loss)
    analytic_all = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    for t in tensors:
        t.grad = None

    coords = [(ti, j) for ti, t in enumerate(tensors) for j in range(t.size)]
    if max_coords is not None and len(coords) > max_coords:
        pick = np.random.default_rng(seed).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]

    analytic = np.empty(len(coords))
    numeric = np.empty(len(coords))
    names = []
    for k, (ti, j) in enumerate(coords):
        flat = tensors[ti].data.reshape(-1)
        orig = flat[j]
        with no_grad():
            flat[j] = orig + step
            up = call().item()
            flat[j] = orig - step
            down = call().item()
        flat[j] = orig
        numeric[k] = (up - down) / (2 * step)
        analytic[k] = analytic_all[ti].reshape(-1)[j]
        names.append(f"{tensors[ti].name or ti}[{j}]")
    return GradCheckReport(analytic, numeric, relative_error(analytic, numeric), tol, names)
