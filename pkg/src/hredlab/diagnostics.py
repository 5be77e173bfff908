"""Relative weight change, weight/gradient histograms, and gap percentages."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal
from typing import Iterable, TextIO

import numpy as np

from .errors import ContractError, DegenerateInputError

# coordinates whose starting value is below this are left out of the mean
ZERO_WEIGHT_THRESHOLD = 1e-12


def relative_weight_change(before, after) -> float:
    """Mean of ``|(after_j - before_j) / before_j|`` over coordinates with nonzero ``before_j``."""
    before = np.asarray(before, dtype=np.float64).reshape(-1)
    after = np.asarray(after, dtype=np.float64).reshape(-1)
    if before.shape != after.shape:
        raise ContractError(f"snapshot shapes differ: {before.shape} vs {after.shape}")
    keep = np.abs(before) >= ZERO_WEIGHT_THRESHOLD
    if not keep.any():
        raise DegenerateInputError("relative_weight_change: every coordinate is (near) zero")
    return float(np.mean(np.abs((after[keep] - before[keep]) / before[keep])))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    min: float
    max: float
    mean: float
    std: float

    @property
    def occupied_bins(self) -> int:
        return int(np.count_nonzero(self.counts))


def weight_histogram(values, bins: int = 101) -> Histogram:
    """Fixed-width histogram over the observed range plus summary statistics."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ContractError("weight_histogram: empty group")
    counts, edges = np.histogram(values, bins=bins)
    return Histogram(edges, counts, float(values.min()), float(values.max()),
                     float(values.mean()), float(values.std()))


def relative_gap(candidate: float, baseline: float) -> float:
    """Signed percentage ``100 * (candidate - baseline) / baseline``."""
    if not baseline > 0:
        raise ContractError(f"relative_gap: baseline must be positive, got {baseline}")
    return 100.0 * (candidate - baseline) / baseline


def report_gap(candidate: float, baseline: float, decimals: int = 0, mode: str = "round") -> float:
    """Gap percentage rounded for display.

    ``mode="round"`` rounds half away from zero; ``mode="truncate"`` drops
    the extra digits (rounds toward zero).
    """
    gap = relative_gap(candidate, baseline)
    quantum = Decimal(1).scaleb(-decimals)
    rounding = {"round": ROUND_HALF_UP, "truncate": ROUND_DOWN}[mode]
    # repr() keeps the shortest decimal that round-trips, avoiding binary noise like 3.4999999
    return float(Decimal(repr(gap)).quantize(quantum, rounding=rounding))


# -- CSV ---------------------------------------------------------------------

WEIGHT_CHANGE_HEADER = ("group", "update_index", "rel_change")
HISTOGRAM_HEADER = ("group", "kind", "bin_low", "bin_high", "count")


def write_header_comment(fh: TextIO, meta: dict | None) -> None:
    if meta:
        import json

        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")


def write_weight_change_csv(fh: TextIO, series: dict[str, Iterable[tuple[int, float]]],
                            meta: dict | None = None) -> None:
    write_header_comment(fh, meta)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(WEIGHT_CHANGE_HEADER)
    for group, points in series.items():
        for update, value in points:
            w.writerow([group, update, _fmt(value)])


def write_histogram_csv(fh: TextIO, hists: dict[tuple[str, str], Histogram],
                        meta: dict | None = None) -> None:
    write_header_comment(fh, meta)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HISTOGRAM_HEADER)
    for (group, kind), h in hists.items():
        for lo, hi, n in zip(h.edges[:-1], h.edges[1:], h.counts):
            w.writerow([group, kind, _fmt(lo), _fmt(hi), int(n)])


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))
