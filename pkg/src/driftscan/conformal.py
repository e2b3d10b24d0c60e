"""Conformal p-values: discrete ranks, randomization, aggregation, Z-scores.

The discrete p-value of a test score is its normalized rank among the
calibration scores, (#{calibration <= test} + 1) / (m + 1); under
exchangeability it is uniform on the grid {1/(m+1), ..., 1}.  Subtracting
an independent U[0, 1/(m+1)) jitter converts it to a continuous uniform
on (0, 1], which also breaks calibration/test ties at random.  Z-scores
are the inverse normal CDF of the continuous p-values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .rng import stream, uniform_open

GRID_TOL = 1e-9


def discrete_pvalue(test_score: float, calib_scores) -> float:
    """Normalized rank of one test score among the calibration scores.

    Calibration scores tied with the test score count toward the rank;
    the tie is broken at random only by the later randomization step.
    """
    calib = np.asarray(calib_scores, dtype=float)
    if calib.size == 0:
        raise ValueError("calibration scores must be nonempty")
    if not np.isfinite(calib).all():
        raise ValueError("calibration scores must be finite")
    if not math.isfinite(test_score):
        raise ValueError("test score must be finite")
    m = calib.size
    return (int(np.count_nonzero(calib <= test_score)) + 1) / (m + 1)


def randomized_pvalue(discrete: float, m: int, u: float) -> float:
    """Continuous p-value: discrete minus u/(m+1) for a uniform u in [0, 1).

    The discrete value must lie on the grid {1/(m+1), ..., 1} within
    GRID_TOL; the result stays strictly positive because u < 1.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    g = round(discrete * (m + 1))
    if g < 1 or g > m + 1 or abs(discrete - g / (m + 1)) > GRID_TOL:
        raise ValueError(f"discrete p-value {discrete} is not on the grid for m={m}")
    return discrete - u / (m + 1)


def zscore(p: float) -> float:
    """Inverse standard normal CDF of a p-value in (0, 1].

    p == 1 maps to +inf (a flagged sentinel, never clamped); callers that
    cannot tolerate it should grow the calibration set instead.
    """
    if p <= 0.0 or p > 1.0:
        raise ValueError(f"p-value must lie in (0, 1], got {p}")
    if p == 1.0:
        return math.inf
    return float(ndtri(p))


def _discrete_ranks(calib: np.ndarray, test: np.ndarray) -> np.ndarray:
    order = np.sort(calib)
    counts = np.searchsorted(order, test, side="right")
    return (counts + 1) / (calib.size + 1)


@dataclass
class PValueTable:
    """Per-test-point discrete and randomized p-values plus Z-scores."""

    indices: np.ndarray
    discrete: np.ndarray
    randomized: np.ndarray
    zscores: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.indices)

    def rows(self):
        for i in range(len(self.indices)):
            yield (
                int(self.indices[i]),
                float(self.discrete[i]),
                float(self.randomized[i]),
                float(self.zscores[i]),
            )

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "discrete", "randomized", "zscore", "seed"])
            for idx, d, r, z in self.rows():
                writer.writerow([idx, repr(d), repr(r), repr(z), self.seed])

    def to_json(self, path) -> None:
        records = [
            {"index": idx, "discrete": d, "randomized": r, "zscore": z, "seed": self.seed}
            for idx, d, r, z in self.rows()
        ]
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(records, fh)
            fh.write("\n")


def pvalue_table(calib_scores, test_scores, seed: int) -> PValueTable:
    """Global p-values of every test score against the calibration set.

    The randomization uniform for test point j comes from an independent
    stream keyed by (seed, j), so any subset of the table can be
    recomputed in any order, or in parallel, with identical results.
    """
    calib = np.asarray(calib_scores, dtype=float)
    test = np.asarray(test_scores, dtype=float)
    if calib.size == 0:
        raise ValueError("calibration scores must be nonempty")
    if not (np.isfinite(calib).all() and np.isfinite(test).all()):
        raise ValueError("scores must be finite")
    discrete = _discrete_ranks(calib, test)
    m = calib.size
    u = np.array([stream(seed, j).random() for j in range(test.size)])
    randomized = discrete - u / (m + 1)
    # randomized is strictly positive (u < 1); ndtri maps an exact 1.0 to +inf,
    # the flagged sentinel for "test score above the whole calibration range".
    z = ndtri(randomized)
    return PValueTable(
        indices=np.arange(test.size),
        discrete=discrete,
        randomized=randomized,
        zscores=z,
        seed=int(seed),
    )


def region_pvalues(calib_scores_in_region, test_scores_in_region, rng) -> list[float] | None:
    """Randomized p-values of a region's test scores against its own
    calibration slice.

    Returns None when the calibration slice is empty (the region is
    unevaluable, which is not the same as p = 1) and an empty list when
    the test slice is empty.
    """
    calib = np.asarray(calib_scores_in_region, dtype=float)
    test = np.asarray(test_scores_in_region, dtype=float)
    if calib.size == 0:
        return None
    if test.size == 0:
        return []
    discrete = _discrete_ranks(calib, test)
    u = rng.random(test.size)
    return list((discrete - u / (calib.size + 1)).astype(float))


def aggregate_region_pvalue(pvals) -> float:
    """Combine per-point p-values into one valid region p-value.

    Twice the mean of (1 - p), capped at 1; small values indicate the
    region's test scores rank high among its calibration scores.
    """
    arr = np.asarray(list(pvals), dtype=float)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty list of p-values")
    return min(1.0, 2.0 * float(np.mean(1.0 - arr)))
