"""FDR-controlled detection of degraded regions.

Each region gets one aggregated p-value from its own calibration/test
score slices; a Benjamini-Hochberg step-up over those p-values rejects
the k_max smallest, with the Benjamini-Yekutieli harmonic correction
applied when regions overlap.  Regions with an empty calibration or
test slice are unevaluable and excluded from the hypothesis count
rather than padded with p = 1, which would silently shift every
threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conformal import aggregate_region_pvalue, region_pvalues
from .regions import RegionFamily
from .rng import stream


@dataclass
class RegionPValue:
    region_id: int
    pvalue: float | None  # None when unevaluable
    n_calib: int
    n_test: int

    @property
    def unevaluable(self) -> bool:
        return self.pvalue is None


@dataclass
class DetectionResult:
    rejected: list[int]  # region ids, ordered by p-value
    k_max: int
    alpha: float
    corrected: bool  # harmonic-sum correction applied (overlapping regions)
    n_tested: int
    excluded: list[int] = field(default_factory=list)  # unevaluable region ids

    def to_dict(self) -> dict:
        return {
            "rejected": list(self.rejected),
            "k_max": self.k_max,
            "alpha": self.alpha,
            "corrected": self.corrected,
            "n_tested": self.n_tested,
            "excluded": list(self.excluded),
        }


def compute_region_pvalues(family: RegionFamily, calib_scores, test_scores,
                           seed: int) -> list[RegionPValue]:
    """Aggregated p-value per region from its own score slices.

    Randomization for region r draws from an independent stream keyed by
    (seed, r), so results do not depend on evaluation order.
    """
    calib = np.asarray(calib_scores, dtype=float)
    test = np.asarray(test_scores, dtype=float)
    out: list[RegionPValue] = []
    for region in family.regions:
        calib_slice = calib[list(region.calib_indices)]
        test_slice = test[list(region.member_indices)]
        pvals = region_pvalues(calib_slice, test_slice, stream(seed, region.id))
        if pvals is None or len(pvals) == 0:
            out.append(RegionPValue(region.id, None, calib_slice.size, test_slice.size))
        else:
            out.append(
                RegionPValue(region.id, aggregate_region_pvalue(pvals),
                             calib_slice.size, test_slice.size)
            )
    return out


def bhy_detect(region_pvals, alpha: float, disjoint: bool) -> DetectionResult:
    """Step-up rejection over (region id, p-value) pairs.

    Disjoint regions use the plain Benjamini-Hochberg thresholds
    l * alpha / N; overlapping regions divide by the harmonic sum
    H_N = sum_{i<=N} 1/i.  Ties in p-values sort by region id.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    pairs = [(int(rid), float(p)) for rid, p in region_pvals]
    if not pairs:
        raise ValueError("no evaluable region p-values supplied")
    n = len(pairs)
    order = sorted(pairs, key=lambda t: (t[1], t[0]))
    denom = n if disjoint else n * float(np.sum(1.0 / np.arange(1, n + 1)))
    k_max = 0
    for l, (_, p) in enumerate(order, start=1):
        if p <= l * alpha / denom:
            k_max = l
    return DetectionResult(
        rejected=[rid for rid, _ in order[:k_max]],
        k_max=k_max,
        alpha=alpha,
        corrected=not disjoint,
        n_tested=n,
    )


def detect_regions(family: RegionFamily, calib_scores, test_scores, alpha: float,
                   seed: int, disjoint: bool | None = None) -> tuple[DetectionResult, list[RegionPValue]]:
    """Full pipeline: region p-values, exclusion of unevaluable regions,
    then the step-up.  disjoint=None reads the family's declaration."""
    if disjoint is None:
        disjoint = family.disjoint
    table = compute_region_pvalues(family, calib_scores, test_scores, seed)
    evaluable = [(row.region_id, row.pvalue) for row in table if not row.unevaluable]
    excluded = [row.region_id for row in table if row.unevaluable]
    if not evaluable:
        raise ValueError("every region is unevaluable (empty calibration or test slices)")
    result = bhy_detect(evaluable, alpha, disjoint)
    result.excluded = excluded
    return result, table


def estimate_fdr(rejected, truth_non_null) -> float:
    """Fraction of rejections that are truly null, |rejected \\ truth| /
    max(|rejected|, 1)."""
    rej = set(rejected)
    return len(rej - set(truth_non_null)) / max(len(rej), 1)
