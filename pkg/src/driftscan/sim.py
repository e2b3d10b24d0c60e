"""Gaussian-sequence simulation harness.

Instances place an elevated mean mu on a region drawn uniformly among a
family's size-k members, with i.i.d. N(0, sigma^2) noise everywhere.
The sweep runner drives the scan, two-step refit, SURE baselines, the
zero estimator, and a detection mode over a seeded grid; every row is
reproducible from (config, master seed, cell index, trial index), so
reports are byte-identical across reruns and worker counts.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .conformal import aggregate_region_pvalue, region_pvalues
from .detect import bhy_detect, estimate_fdr
from .identify import ScanConfig, recovery_error, scan
from .refit import refit_two_step, sure_mle
from .regions import Region, RegionFamily, explicit_family, interval_family
from .rng import standard_normals, stream

METRIC_COLUMNS = (
    "recovery_error",
    "refit_l2_error",
    "sure_const_l2_error",
    "sure_card_l2_error",
    "zero_l2_error",
    "fdr",
    "n_rejected",
)

ROW_COLUMNS = ("cell", "kind", "n", "k", "d", "mu_over_sigma", "trial") + METRIC_COLUMNS + ("error",)


@dataclass
class GaussianInstance:
    n: int
    k: int
    mu: float
    sigma: float
    r_star: Region
    z: np.ndarray
    seed: int

    def __post_init__(self):
        if self.r_star.cardinality != self.k:
            raise ValueError("r_star cardinality must equal k")

    def mean_vector(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[list(self.r_star.member_indices)] = self.mu
        return out


def gen_instance(n: int, k: int, mu: float, sigma: float, family: RegionFamily,
                 seed: int) -> GaussianInstance:
    """Draw r_star uniformly among the family's size-k regions and emit
    z = mu * 1_{r_star} + sigma * xi with xi i.i.d. standard normal.

    sigma = 0 is allowed for noiseless oracle checks.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = stream(seed)
    r_star = family.sample_region_of_size(k, rng)
    xi = standard_normals(rng, size=n)
    z = sigma * xi
    z[list(r_star.member_indices)] += mu
    return GaussianInstance(n=n, k=k, mu=mu, sigma=sigma, r_star=r_star, z=z, seed=int(seed))


def threshold_T(n: int, k: int, d: int, mu: float, sigma: float, c: float = 1.0) -> int:
    """Largest t in 1..k with t <= (c sigma^2 / mu^2) (d ^ t) log((n-k+t)/t),
    or 0 when no t qualifies.  The exhaustive t-scan is the definition."""
    if not (1 <= d <= k <= n / 2):
        raise ValueError(f"need 1 <= d <= k <= n/2, got d={d} k={k} n={n}")
    if c <= 0 or sigma <= 0:
        raise ValueError("c and sigma must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return k
    t = np.arange(1, k + 1, dtype=float)
    rhs = (c * sigma**2 / mu**2) * np.minimum(d, t) * np.log((n - k + t) / t)
    ok = np.nonzero(t <= rhs)[0]
    return int(ok[-1] + 1) if ok.size else 0


def threshold_regime(n: int, k: int, d: int, mu: float, sigma: float,
                     c: float = 1.0) -> tuple[int | None, int | None]:
    """Closed-form lower bound on threshold_T by SNR regime.

    Returns (regime, bound): regime 1 (low SNR) bounds T by k itself;
    regime 2 by max(d, floor((c/2) d_snr log((n-k)/(c d_snr)))); regime 3
    by floor((n-k) exp(-snr/c)).  (None, None) when the SNR exceeds every
    regime's range.
    """
    if not (1 <= d <= k <= n / 2):
        raise ValueError(f"need 1 <= d <= k <= n/2, got d={d} k={k} n={n}")
    snr = mu**2 / sigma**2
    b1 = c * d * math.log(n / k) / k
    b2 = c * math.log((n - k + d) / d)
    b3 = c * math.log(n - k + 1)
    if snr <= b1:
        return 1, k
    if snr <= b2:
        d_snr = d * sigma**2 / mu**2
        inner = (n - k) / (c * d_snr)
        bound = max(d, math.floor(0.5 * c * d_snr * math.log(inner)) if inner > 0 else 0)
        return 2, bound
    if snr <= b3:
        return 3, math.floor((n - k) * math.exp(-snr / c))
    return None, None


def hamming_distance(r1: Region, r2: Region) -> int:
    return len(set(r1.member_indices) ^ set(r2.member_indices))


def correlation_distance(r1: Region, r2: Region) -> float:
    """sqrt(1 - |R1 n R2| / sqrt(|R1| |R2|)), the metric under which the
    scan's noise process is subgaussian.  Diagnostic only."""
    if r1.cardinality == 0 or r2.cardinality == 0:
        raise ValueError("regions must be nonempty")
    overlap = len(set(r1.member_indices) & set(r2.member_indices))
    val = 1.0 - overlap / math.sqrt(r1.cardinality * r2.cardinality)
    return math.sqrt(max(val, 0.0))


# ---------------------------------------------------------------------------
# sweep runner


_GAUSSIAN_DEFAULTS = {
    "kind": "gaussian",
    "sigma": 1.0,
    "penalty_C": 1.0,
    "family": "intervals",  # intervals | singletons_full
    "min_size": 1,
    "max_size": 0,  # 0: up to n
    "estimators": ["scan"],
    "trials": 1,
    "d": None,  # None: family's declared vc_dim
}

_DETECTION_DEFAULTS = {
    "kind": "detection",
    "regions": 20,
    "non_null": 0,
    "shift": 1.0,
    "m_per_region": 50,
    "n_per_region": 50,
    "alpha": 0.2,
    "sigma": 1.0,
    "trials": 1,
}

_SWEEP_KEYS = ("n", "k", "mu_over_sigma")


def expand_cells(config: dict) -> list[dict]:
    """Expand list-valued n / k / mu_over_sigma entries into a grid of
    concrete cells, in declaration order."""
    raw_cells = config.get("cells")
    if not raw_cells:
        raise ValueError("sweep config needs a nonempty 'cells' list")
    cells = []
    for entry in raw_cells:
        kind = entry.get("kind", "gaussian")
        defaults = _DETECTION_DEFAULTS if kind == "detection" else _GAUSSIAN_DEFAULTS
        merged = {**defaults, **entry}
        sweeps = [(key, merged[key]) for key in _SWEEP_KEYS
                  if isinstance(merged.get(key), (list, tuple))]
        stack = [merged]
        for key, values in sweeps:
            stack = [{**cell, key: v} for cell in stack for v in values]
        cells.extend(stack)
    return cells


@lru_cache(maxsize=8)
def _cached_family(kind: str, n: int, min_size: int, max_size: int) -> RegionFamily:
    if kind == "intervals":
        return interval_family(n, min_size, max_size if max_size else n)
    if kind == "singletons_full":
        sets = [[i] for i in range(n)] + [list(range(n))]
        return explicit_family(sets, vc_dim=1)
    raise ValueError(f"unknown sweep family {kind!r}")


def _l2_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    diff = estimate - truth
    return float(diff @ diff)


def _gaussian_trial(cell: dict, trial_seed: int) -> dict:
    n, k = int(cell["n"]), int(cell["k"])
    sigma = float(cell["sigma"])
    mu = float(cell["mu_over_sigma"]) * sigma
    family = _cached_family(cell["family"], n, int(cell["min_size"]), int(cell["max_size"]))
    d = int(cell["d"]) if cell.get("d") is not None else family.vc_dim
    inst = gen_instance(n, k, mu, sigma, family, trial_seed)
    truth = inst.mean_vector()
    cfg = ScanConfig(sigma=sigma if sigma > 0 else 1.0, vc_dim_d=d,
                     size_penalty_C=float(cell["penalty_C"]),
                     max_card=cell.get("max_card"))
    row: dict = {}
    estimators = cell["estimators"]
    if "scan" in estimators:
        res = scan(inst.z, family, cfg)
        row["recovery_error"] = recovery_error(res.region, inst.r_star)
    if "refit" in estimators:
        est = refit_two_step(inst.z, family, cfg)
        row["refit_l2_error"] = _l2_error(est.vector(), truth)
    if "sure-const" in estimators:
        _, vec = sure_mle(inst.z, family, sigma if sigma > 0 else 1.0, "constant-one")
        row["sure_const_l2_error"] = _l2_error(vec, truth)
    if "sure-card" in estimators:
        _, vec = sure_mle(inst.z, family, sigma if sigma > 0 else 1.0, "cardinality")
        row["sure_card_l2_error"] = _l2_error(vec, truth)
    if "zero" in estimators:
        row["zero_l2_error"] = k * mu**2
    return row


def _detection_trial(cell: dict, trial_seed: int) -> dict:
    n_regions = int(cell["regions"])
    non_null = int(cell["non_null"])
    m_per, n_per = int(cell["m_per_region"]), int(cell["n_per_region"])
    sigma, shift, alpha = float(cell["sigma"]), float(cell["shift"]), float(cell["alpha"])
    rng = stream(trial_seed)
    truth = set(range(non_null))  # first regions carry the shift
    pairs = []
    for rid in range(n_regions):
        calib = sigma * standard_normals(rng, m_per)
        test = sigma * standard_normals(rng, n_per)
        if rid in truth:
            test = test + shift * sigma
        pvals = region_pvalues(calib, test, stream(trial_seed, rid))
        pairs.append((rid, aggregate_region_pvalue(pvals)))
    result = bhy_detect(pairs, alpha, disjoint=True)
    return {
        "fdr": estimate_fdr(result.rejected, truth),
        "n_rejected": result.k_max,
    }


def run_trial(cell: dict, cell_index: int, trial: int, master_seed: int) -> dict:
    """One sweep row; pure function of its arguments."""
    trial_seed_source = np.random.SeedSequence((int(master_seed), cell_index, trial))
    trial_seed = int(trial_seed_source.generate_state(1, np.uint64)[0])
    row = {col: "" for col in ROW_COLUMNS}
    row.update({
        "cell": cell_index,
        "kind": cell.get("kind", "gaussian"),
        "n": cell.get("n") if cell.get("n") is not None else "",
        "k": cell.get("k") if cell.get("k") is not None else "",
        "d": cell.get("d") if cell.get("d") is not None else "",
        "mu_over_sigma": cell.get("mu_over_sigma") if cell.get("mu_over_sigma") is not None else "",
        "trial": trial,
    })
    start = time.perf_counter()
    try:
        if cell.get("kind", "gaussian") == "detection":
            row.update(_detection_trial(cell, trial_seed))
        else:
            row.update(_gaussian_trial(cell, trial_seed))
    except Exception as exc:  # recorded, sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["_runtime_s"] = time.perf_counter() - start  # in-memory only, not serialized
    return row


def _run_trial_star(args) -> dict:
    return run_trial(*args)


@dataclass
class SweepReport:
    rows: list[dict]
    aggregates: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = _aggregate(self.rows)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(ROW_COLUMNS)
            for row in self.rows:
                writer.writerow([_fmt(row.get(col, "")) for col in ROW_COLUMNS])

    def summary(self) -> dict:
        return {"n_rows": len(self.rows), "cells": self.aggregates}

    def to_json_summary(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _aggregate(rows: list[dict]) -> list[dict]:
    cells: dict[int, list[dict]] = {}
    for row in rows:
        cells.setdefault(row["cell"], []).append(row)
    out = []
    for cell_index in sorted(cells):
        group = cells[cell_index]
        agg: dict = {
            "cell": cell_index,
            "kind": group[0]["kind"],
            "n": group[0]["n"],
            "k": group[0]["k"],
            "mu_over_sigma": group[0]["mu_over_sigma"],
            "trials": len(group),
            "errors": sum(1 for r in group if r.get("error")),
        }
        for metric in METRIC_COLUMNS:
            vals = np.array([r[metric] for r in group
                             if isinstance(r.get(metric), (int, float))], dtype=float)
            if vals.size:
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                agg[metric] = {"median": float(med), "iqr": float(q3 - q1),
                               "mean": float(vals.mean()), "count": int(vals.size)}
        out.append(agg)
    return out


def run_sweep(config: dict, seed: int, workers: int = 1) -> SweepReport:
    """Run every (cell, trial) pair of the expanded grid.

    Rows are ordered by (cell, trial) regardless of worker count; each
    pair derives its own seed, so the report is identical for any
    `workers`.
    """
    cells = expand_cells(config)
    tasks = [(cell, idx, trial, int(seed))
             for idx, cell in enumerate(cells)
             for trial in range(int(cell["trials"]))]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_trial_star, tasks, chunksize=8))
    else:
        rows = [run_trial(*t) for t in tasks]
    return SweepReport(rows=rows)
