"""Refitting estimators over identified regions.

The two-step estimator runs the penalized scan on raw model errors and
fits their average on the winning region (zero elsewhere).  The
SURE-tuned baselines minimize RSS + 2 * sigma^2 * df over the family
augmented with the empty region, with df = 1 for the constant-mean fit
and df = |R| for the identity-on-support fit (Mallows's C_p).  Local
model aggregation covers simple averaging and simplex-constrained
stacking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .identify import ScanConfig, ScanResult, scan
from .regions import Region, RegionFamily

EMPTY_REGION = Region(id=-1, member_indices=(), descriptor={"empty": True})

_STACK_MAX_ITER = 10_000
_STACK_OBJ_TOL = 1e-10
_STACK_KKT_TOL = 1e-8


@dataclass
class RefitEstimate:
    """Piecewise-constant estimate: `level` on the support, zero off it."""

    support: Region
    level: float
    n: int
    scan_result: ScanResult | None = None

    def __post_init__(self):
        if self.support.member_indices and self.support.member_indices[-1] >= self.n:
            raise ValueError("support indexes beyond the estimate length")

    def vector(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[list(self.support.member_indices)] = self.level
        return out

    def to_dict(self) -> dict:
        return {"support": self.support.to_dict(), "level": self.level, "n": self.n}


@dataclass
class SureSelection:
    region: Region  # possibly the empty region
    criterion_value: float
    df_model: str  # "constant-one" | "cardinality"
    df: int

    def to_dict(self) -> dict:
        return {
            "region": self.region.to_dict(),
            "criterion_value": self.criterion_value,
            "df_model": self.df_model,
            "df": self.df,
        }


@dataclass
class StackWeights:
    w: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "w": [float(v) for v in self.w],
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
        }


def refit_two_step(y, family: RegionFamily, cfg: ScanConfig) -> RefitEstimate:
    """Scan the raw errors for the worst region, then fit their average
    on it.  Shares the scan code path exactly, with y in place of z."""
    yy = np.asarray(y, dtype=float)
    result = scan(yy, family, cfg)
    members = list(result.region.member_indices)
    level = float(np.mean(yy[members]))
    return RefitEstimate(support=result.region, level=level, n=yy.size, scan_result=result)


def sure_mle(y, family: RegionFamily, sigma: float,
             df_model: str = "constant-one") -> tuple[SureSelection, np.ndarray]:
    """Minimize ||y - fit_R||^2 + 2 * sigma^2 * df(R) over the family
    plus the empty region (df = 0, fit = 0).

    constant-one: fit_R is the on-support average, df = 1.
    cardinality:  fit_R is y itself on the support, df = |R|.
    Ties break toward the smaller df, then the smaller region id.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if df_model not in ("constant-one", "cardinality"):
        raise ValueError(f"unknown df_model {df_model!r}")
    yy = np.asarray(y, dtype=float)
    if not np.isfinite(yy).all():
        raise ValueError("observations must be finite")
    base = float(yy @ yy)
    n = yy.size

    candidates = list(family.regions)
    if not any(r.cardinality == 0 for r in candidates):
        candidates.append(EMPTY_REGION)

    best: tuple[float, int, int] | None = None  # (criterion, df, id)
    best_region = EMPTY_REGION
    for r in candidates:
        card = r.cardinality
        if card and r.member_indices[-1] >= n:
            raise ValueError(f"region {r.id} indexes beyond the {n} observations")
        if card == 0:
            crit, df = base, 0
        elif df_model == "constant-one":
            s = float(yy[list(r.member_indices)].sum())
            crit, df = base - s * s / card + 2.0 * sigma**2, 1
        else:
            sq = float((yy[list(r.member_indices)] ** 2).sum())
            crit, df = base - sq + 2.0 * sigma**2 * card, card
        key = (crit, df, r.id)
        if best is None or key < best:
            best = key
            best_region = r
    assert best is not None
    crit, df, _ = best
    estimate = np.zeros(n)
    members = list(best_region.member_indices)
    if members:
        if df_model == "constant-one":
            estimate[members] = float(np.mean(yy[members]))
        else:
            estimate[members] = yy[members]
    return SureSelection(region=best_region, criterion_value=crit,
                         df_model=df_model, df=df), estimate


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _kkt_residual(w: np.ndarray, grad: np.ndarray) -> float:
    lam = float(grad.min())
    scale = 1.0 + float(np.abs(grad).max())
    return float((w * (grad - lam)).max()) / scale


def _solve_on_support(G: np.ndarray, b: np.ndarray, support: np.ndarray):
    """Equality-constrained minimizer of w'Gw - 2b'w with sum w = 1 on the
    given support; returns (w_support, lam) where lam is the common
    gradient value on the support."""
    k = support.size
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = 2.0 * G[np.ix_(support, support)]
    A[:k, k] = 1.0
    A[k, :k] = 1.0
    rhs = np.concatenate([2.0 * b[support], [1.0]])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return sol[:k], -float(sol[k])


def _active_set_polish(G: np.ndarray, b: np.ndarray, w: np.ndarray,
                       max_rounds: int) -> np.ndarray:
    """Lawson-Hanson style finishing pass: drives the projected-gradient
    iterate to an exact KKT point of the simplex-constrained program."""
    r = w.size
    support = np.nonzero(w > 1e-12)[0]
    if support.size == 0:
        support = np.array([int(np.argmin(np.diag(G) - 2.0 * b))])
        w = np.zeros(r)
        w[support[0]] = 1.0
    for _ in range(max_rounds):
        z_s, lam = _solve_on_support(G, b, support)
        while (z_s < -1e-12).any():
            w_s = w[support]
            shrink = z_s < w_s
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.where(shrink & (z_s <= 0), w_s / (w_s - z_s), np.inf)
            alpha = float(steps.min())
            w_s = w_s + alpha * (z_s - w_s)
            w = np.zeros(r)
            w[support] = np.maximum(w_s, 0.0)
            support = np.nonzero(w > 1e-12)[0]
            if support.size == 0:
                support = np.array([int(np.argmin(np.diag(G) - 2.0 * b))])
            z_s, lam = _solve_on_support(G, b, support)
        w = np.zeros(r)
        w[support] = z_s
        grad = 2.0 * (G @ w - b)
        tol = 1e-10 * (1.0 + float(np.abs(grad).max()))
        outside = np.setdiff1d(np.arange(r), support)
        violations = outside[grad[outside] < lam - tol]
        if violations.size == 0:
            break
        entering = int(violations[np.argmin(grad[violations])])
        support = np.sort(np.append(support, entering))
    total = float(w.sum())
    if total > 0:
        w = w / total  # exact feasibility against accumulated round-off
    return np.maximum(w, 0.0)


def stack_weights(U, y) -> StackWeights:
    """Simplex-constrained least squares min ||y - U w||^2, w >= 0,
    sum w = 1, solved by accelerated projected gradient.

    Deterministic: exact duplicate columns are collapsed before solving
    and their combined weight lands on the lowest column index, so
    degenerate programs resolve the same way every run.
    """
    U = np.asarray(U, dtype=float)
    yy = np.asarray(y, dtype=float)
    if U.ndim != 2:
        raise ValueError("U must be a 2-D matrix of predictions")
    if U.shape[0] != yy.size:
        raise ValueError(f"U has {U.shape[0]} rows but y has {yy.size} entries")
    if not (np.isfinite(U).all() and np.isfinite(yy).all()):
        raise ValueError("predictions and targets must be finite")
    n, s = U.shape
    if s < 1 or n < 1:
        raise ValueError("need at least one model and one observation")

    # collapse exact duplicate columns; mass goes to the first of each group
    keep: list[int] = []
    owner = np.empty(s, dtype=int)
    for j in range(s):
        for pos, kcol in enumerate(keep):
            if np.array_equal(U[:, j], U[:, kcol]):
                owner[j] = pos
                break
        else:
            owner[j] = len(keep)
            keep.append(j)
    V = U[:, keep]
    r = V.shape[1]

    if r == 1:
        w_red = np.array([1.0])
        resid = V[:, 0] - yy
        obj = float(resid @ resid)
        kkt, iters = 0.0, 0
    else:
        G = V.T @ V
        b = V.T @ yy
        L = float(np.linalg.eigvalsh(G).max()) * 2.0
        if L <= 0:
            L = 1.0
        w_red = np.full(r, 1.0 / r)
        v = w_red.copy()
        t = 1.0
        obj = float(w_red @ G @ w_red - 2.0 * b @ w_red + yy @ yy)
        iters = 0
        for iters in range(1, _STACK_MAX_ITER + 1):
            grad_v = 2.0 * (G @ v - b)
            w_new = _project_simplex(v - grad_v / L)
            obj_new = float(w_new @ G @ w_new - 2.0 * b @ w_new + yy @ yy)
            if obj_new > obj:  # restart momentum on overshoot
                v, t = w_red.copy(), 1.0
                continue
            t_new = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
            v = w_new + ((t - 1.0) / t_new) * (w_new - w_red)
            decrease = obj - obj_new
            w_red, obj, t = w_new, obj_new, t_new
            grad = 2.0 * (G @ w_red - b)
            if decrease < _STACK_OBJ_TOL and _kkt_residual(w_red, grad) <= _STACK_KKT_TOL:
                break
        # ill-conditioned programs can stall short of the KKT tolerance;
        # an exact active-set pass from the current support finishes the job
        if _kkt_residual(w_red, 2.0 * (G @ w_red - b)) > _STACK_KKT_TOL:
            polished = _active_set_polish(G, b, w_red, max_rounds=3 * r + 10)
            obj_polished = float(polished @ G @ polished - 2.0 * b @ polished + yy @ yy)
            if obj_polished <= obj + _STACK_OBJ_TOL:
                w_red, obj = polished, obj_polished
        kkt = _kkt_residual(w_red, 2.0 * (G @ w_red - b))

    # expand back: a duplicate group's combined weight sits on its first column
    w = np.zeros(s)
    for pos, col in enumerate(keep):
        w[col] = w_red[pos]
    return StackWeights(w=w, objective=obj, kkt_residual=kkt, iterations=iters)


def average_predictions(preds) -> np.ndarray:
    """Row means of an n x s prediction matrix."""
    P = np.asarray(preds, dtype=float)
    if P.ndim != 2 or P.shape[1] < 1:
        raise ValueError("preds must be an n x s matrix with s >= 1")
    return P.mean(axis=1)


def median_relative_abs_dev(pred, y_next, y_prev) -> float:
    """Median of |y_next - pred| / |y_next - y_prev| over points where the
    denominator is nonzero; zero-denominator pairs are dropped."""
    p = np.asarray(pred, dtype=float)
    yn = np.asarray(y_next, dtype=float)
    yp = np.asarray(y_prev, dtype=float)
    if not (p.size == yn.size == yp.size):
        raise ValueError("pred, y_next, y_prev must have equal lengths")
    denom = np.abs(yn - yp)
    keep = denom > 0
    if not keep.any():
        raise ValueError("all reference deltas are zero; the measure is undefined")
    return float(np.median(np.abs(yn - p)[keep] / denom[keep]))


def nearest_region(regions, points, x) -> int:
    """Pure-local dispatch: id of the region whose member points lie
    closest to x in Euclidean point-to-set distance; ties go to the
    smaller region id.  No fallback exists for far-away points; the
    nearest region wins regardless of distance."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    xv = np.asarray(x, dtype=float).reshape(-1)
    best_id = None
    best_dist = math.inf
    for region in sorted(regions, key=lambda r: r.id):
        if region.cardinality == 0:
            continue
        d = float(np.sqrt(((pts[list(region.member_indices)] - xv) ** 2).sum(axis=1)).min())
        if d < best_dist:
            best_dist, best_id = d, region.id
    if best_id is None:
        raise ValueError("no nonempty region to dispatch to")
    return best_id
