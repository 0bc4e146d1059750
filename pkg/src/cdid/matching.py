"""Radius matching on a scalar propensity score.

Pipeline: trim references above the largest comparison score, take the
nearest-neighbour distance of every kept reference, set the radius to a
fraction of a quantile of those distances, weight all comparisons inside the
radius with a decreasing kernel, and finally correct the matched mean with a
weighted regression on the covariates.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._linalg import independent_columns, weighted_lstsq
from .errors import AdjustmentError, MatchingError, RankWarning, SupportError

RADIUS_FLOOR = 1e-12
KERNEL_ETA = 1e-9
KERNELS = ("triangular", "inverse_distance")


@dataclass
class MatchResult:
    """Sparse matching weights in coordinate form.

    Entry ``k`` says reference ``ref_index[k]`` uses comparison
    ``comp_index[k]`` with weight ``weight[k]``. Weights of every on-support
    reference sum to one.
    """

    radius: float
    ref_index: np.ndarray
    comp_index: np.ndarray
    weight: np.ndarray
    on_support: np.ndarray
    n_comparison: int
    fallback_count: int = 0

    @property
    def dropped_count(self) -> int:
        return int((~self.on_support).sum())

    @property
    def n_reference(self) -> int:
        return len(self.on_support)

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        sel = self.ref_index == i
        return list(zip(self.comp_index[sel].tolist(), self.weight[sel].tolist()))

    def aggregate_weights(self) -> np.ndarray:
        """Comparison weights averaged over on-support references (sum to 1)."""
        n_on = int(self.on_support.sum())
        w = np.bincount(self.comp_index, weights=self.weight, minlength=self.n_comparison)
        return w / n_on if n_on else w


def trim_support(ref_scores, comp_scores) -> np.ndarray:
    """Keep references whose score does not exceed the largest comparison score."""
    comp = np.asarray(comp_scores, dtype=float)
    if comp.size == 0:
        raise SupportError("empty comparison set")
    return np.asarray(ref_scores, dtype=float) <= comp.max()


def nearest_neighbor_distances(ref_scores, comp_scores) -> np.ndarray:
    ref = np.asarray(ref_scores, dtype=float)
    comp = np.sort(np.asarray(comp_scores, dtype=float))
    if comp.size == 0:
        raise MatchingError("empty comparison pool")
    pos = np.searchsorted(comp, ref)
    left = np.abs(ref - comp[np.clip(pos - 1, 0, comp.size - 1)])
    right = np.abs(comp[np.clip(pos, 0, comp.size - 1)] - ref)
    return np.minimum(left, right)


def nearest_rank_quantile(values, q: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise MatchingError("quantile of empty input")
    # round first so that e.g. 0.9 * 10 does not become 10.000000000000002
    k = max(1, math.ceil(round(q * v.size, 9)))
    return float(v[min(k, v.size) - 1])


def compute_radius(nn_distances, fraction: float = 0.9, quantile: float = 0.9) -> float:
    """``fraction`` times the nearest-rank ``quantile`` of the NN distances."""
    d = np.asarray(nn_distances, dtype=float)
    if d.size == 0:
        raise MatchingError("no nearest-neighbour distances to size the radius")
    r = fraction * nearest_rank_quantile(d, quantile)
    return r if r > 0 else RADIUS_FLOOR


def kernel_weights(dist: np.ndarray, radius: float, kernel: str = "triangular", eta: float = KERNEL_ETA):
    if kernel == "triangular":
        return np.clip(1.0 - dist / radius, 0.0, None) + eta
    if kernel == "inverse_distance":
        return 1.0 / (dist / radius + eta)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def radius_match(
    ref_scores,
    comp_scores,
    radius: float,
    on_support=None,
    kernel: str = "triangular",
    eta: float = KERNEL_ETA,
) -> MatchResult:
    """Match every on-support reference to all comparisons within ``radius``.

    References with an empty neighbourhood fall back to their nearest
    comparison (all of them, equally weighted, on exact ties).
    """
    ref = np.asarray(ref_scores, dtype=float)
    comp = np.asarray(comp_scores, dtype=float)
    if comp.size == 0:
        raise MatchingError("empty comparison pool")
    if not radius > 0:
        raise MatchingError(f"radius must be positive, got {radius}")
    support = np.ones(ref.size, dtype=bool) if on_support is None else np.asarray(on_support, dtype=bool)
    active = np.flatnonzero(support)

    order = np.argsort(comp, kind="stable")
    cs = comp[order]
    p = ref[active]
    owner, cj, dist = _window_pairs(p, cs, order, comp, radius)
    inside = dist <= radius
    owner, cj, dist = owner[inside], cj[inside], dist[inside]
    raw = kernel_weights(dist, radius, kernel, eta)

    has = np.bincount(owner, minlength=active.size) > 0
    lonely = np.flatnonzero(~has)
    if lonely.size:
        # nearest-neighbour fallback; every exactly tied neighbour gets equal weight
        dmin = nearest_neighbor_distances(p[lonely], comp)
        fo, fc, fd = _window_pairs(p[lonely], cs, order, comp, dmin)
        tied = fd == dmin[fo]
        owner = np.concatenate([owner, lonely[fo[tied]]])
        cj = np.concatenate([cj, fc[tied]])
        raw = np.concatenate([raw, np.ones(int(tied.sum()))])

    sums = np.bincount(owner, weights=raw, minlength=active.size)
    w = raw / sums[owner]
    srt = np.lexsort((cj, owner))
    return MatchResult(
        radius=float(radius),
        ref_index=active[owner[srt]],
        comp_index=cj[srt],
        weight=w[srt],
        on_support=support,
        n_comparison=comp.size,
        fallback_count=int(lonely.size),
    )


def _window_pairs(p, cs, order, comp, half_width):
    """All (reference, comparison) pairs with |p - c| <= half_width, plus a tiny slack.

    Callers filter on the exact distance afterwards; the slack only guards the
    sorted-array search against rounding in ``p +/- half_width``.
    """
    slack = 1e-12 + 4 * np.finfo(float).eps * (np.abs(p) + half_width)
    lo = np.searchsorted(cs, p - half_width - slack, side="left")
    hi = np.searchsorted(cs, p + half_width + slack, side="right")
    counts = hi - lo
    total = int(counts.sum())
    owner = np.repeat(np.arange(p.size), counts)
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    cj = order[np.arange(total) + starts]
    return owner, cj, np.abs(p[owner] - comp[cj])


@dataclass
class AdjustedMean:
    raw: float
    adjusted: float
    slopes: np.ndarray
    kept_columns: np.ndarray
    adjustment_failed: bool = False


def adjusted_mean_details(match: MatchResult, comp_outcomes, comp_covariates, ref_covariate_means) -> AdjustedMean:
    y = np.asarray(comp_outcomes, dtype=float)
    W = match.aggregate_weights()
    raw = float(W @ y)
    X = np.asarray(comp_covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    xbar_ref = np.asarray(ref_covariate_means, dtype=float).reshape(-1)
    if X.shape[1] != xbar_ref.size:
        raise AdjustmentError(f"{X.shape[1]} comparison covariates but {xbar_ref.size} reference means")
    if y.size and np.ptp(y) == 0:
        # constant response: regression has nothing to correct
        return AdjustedMean(float(y[0]), float(y[0]), np.zeros(X.shape[1]), np.arange(X.shape[1]))
    if X.shape[1] == 0:
        return AdjustedMean(raw, raw, np.zeros(0), np.arange(0))

    used = W > 0
    Xu, yu, wu = X[used], y[used], W[used]
    design = np.column_stack([np.ones(Xu.shape[0]), Xu])
    keep = independent_columns(design, wu)
    if keep.size == 0 or keep[0] != 0:
        warnings.warn("bias adjustment failed: weighted intercept is degenerate", RankWarning, stacklevel=3)
        return AdjustedMean(raw, raw, np.zeros(X.shape[1]), np.arange(0), adjustment_failed=True)
    slope_cols = keep[1:] - 1
    if slope_cols.size < X.shape[1]:
        warnings.warn(
            f"bias adjustment: dropping collinear covariates "
            f"{sorted(set(range(X.shape[1])) - set(slope_cols.tolist()))}",
            RankWarning,
            stacklevel=3,
        )
    coef = weighted_lstsq(design[:, keep], yu, wu)
    slopes = np.zeros(X.shape[1])
    slopes[slope_cols] = coef[1:]
    xbar_comp = W @ X
    adjusted = raw + float(slopes @ (xbar_ref - xbar_comp))
    return AdjustedMean(raw, adjusted, slopes, slope_cols)


def bias_adjusted_mean(match: MatchResult, comp_outcomes, comp_covariates, ref_covariate_means) -> float:
    """Matched mean of the comparison outcomes, regression-corrected.

    Returns ``m + b'(xbar_ref - xbar_comp)`` where ``m`` and ``xbar_comp`` use
    the aggregate matching weights and ``b`` are the slopes of a weighted
    least-squares fit of outcomes on covariates with the same weights.
    """
    return adjusted_mean_details(match, comp_outcomes, comp_covariates, ref_covariate_means).adjusted
