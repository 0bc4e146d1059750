"""Balance, overlap and listing-duration diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, SurvivalError, SupportError

LARGE_SD = 20.0
TARGET_SD = 10.0


def _is_binary(x: np.ndarray) -> bool:
    return x.size > 0 and bool(np.isin(x, (0.0, 1.0)).all())


def weighted_moments(x, weights=None, binary: bool = False) -> tuple[float, float]:
    """Mean and variance; p(1-p) for binary data, otherwise the (n-1) sample variance.

    With weights the variance uses the reliability-weight correction
    ``sum w (x - m)^2 / (1 - sum w^2)`` for normalized ``w``, which reduces to
    the usual sample variance for equal weights.
    """
    x = np.asarray(x, dtype=float)
    if weights is None:
        m = float(x.mean())
        if binary:
            return m, m * (1 - m)
        return m, float(x.var(ddof=1)) if x.size > 1 else 0.0
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    m = float(w @ x)
    if binary:
        return m, m * (1 - m)
    denom = 1.0 - float(w @ w)
    return m, float(w @ (x - m) ** 2) / denom if denom > 0 else 0.0


def standardized_difference_from_moments(mean_a, var_a, mean_b, var_b) -> float:
    """100 |mean_a - mean_b| / sqrt((var_a + var_b) / 2)."""
    gap = abs(mean_a - mean_b)
    pooled = 0.5 * (var_a + var_b)
    if pooled <= 0:
        if gap == 0:
            return 0.0
        raise DegenerateVarianceError(f"zero variance but means differ ({mean_a} vs {mean_b})")
    return 100.0 * gap / math.sqrt(pooled)


def standardized_difference(sample_a, sample_b, binary: bool | None = None, weights_b=None) -> float:
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("standardized difference needs two nonempty samples")
    if binary is None:
        binary = _is_binary(a) and _is_binary(b)
    ma, va = weighted_moments(a, None, binary)
    mb, vb = weighted_moments(b, weights_b, binary)
    return standardized_difference_from_moments(ma, va, mb, vb)


@dataclass
class BalanceRow:
    covariate: str
    mean_ref: float
    sd_ref: float
    mean_comp: float
    sd_comp: float
    std_diff: float
    error: str = ""

    @property
    def large(self) -> bool:
        return math.isfinite(self.std_diff) and self.std_diff > LARGE_SD

    @property
    def above_target(self) -> bool:
        return math.isfinite(self.std_diff) and self.std_diff > TARGET_SD

    def as_dict(self) -> dict:
        return {
            "covariate": self.covariate,
            "mean_ref": self.mean_ref,
            "sd_ref": self.sd_ref,
            "mean_comp": self.mean_comp,
            "sd_comp": self.sd_comp,
            "std_diff": self.std_diff,
            "large": int(self.large),
            "above_target": int(self.above_target),
            "error": self.error,
        }


def balance_table(reference: dict, comparison: dict, weights=None, binary: dict | None = None) -> list[BalanceRow]:
    """Standardized differences per covariate.

    ``reference`` and ``comparison`` map covariate names to raw value arrays.
    When ``weights`` (one per comparison row) are given, comparison moments
    are weighted, which gives the after-matching balance.
    """
    rows = []
    for name, a in reference.items():
        a = np.asarray(a, dtype=float)
        b = np.asarray(comparison[name], dtype=float)
        is_bin = binary.get(name) if binary and name in binary else (_is_binary(a) and _is_binary(b))
        ma, va = weighted_moments(a, None, is_bin)
        mb, vb = weighted_moments(b, weights, is_bin)
        try:
            sd = standardized_difference_from_moments(ma, va, mb, vb)
            err = ""
        except DegenerateVarianceError as exc:
            sd, err = math.nan, str(exc)
        rows.append(BalanceRow(name, ma, math.sqrt(va), mb, math.sqrt(vb), sd, err))
    return rows


@dataclass
class SupportHistogram:
    edges: np.ndarray
    ref_counts: np.ndarray
    comp_counts: np.ndarray
    threshold: float


def support_histogram(ref_scores, comp_scores, bins: int = 20) -> SupportHistogram:
    comp = np.asarray(comp_scores, dtype=float)
    ref = np.asarray(ref_scores, dtype=float)
    if comp.size == 0:
        raise SupportError("empty comparison set")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    edges = np.linspace(0.0, 1.0, bins + 1)
    rc, _ = np.histogram(ref, bins=edges)
    cc, _ = np.histogram(comp, bins=edges)
    return SupportHistogram(edges, rc, cc, float(comp.max()))


@dataclass
class SurvivalCurve:
    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray


def kaplan_meier(durations, censored, horizon: int = 24) -> SurvivalCurve:
    """Product-limit survival of listings for days 0..horizon.

    ``censored[i]`` is True when listing ``i`` was still online at its last
    observed day. Durations beyond the horizon count as censored at the
    horizon. At a tied day, events are removed before censorings.
    """
    d = np.asarray(durations)
    c = np.asarray(censored, dtype=bool)
    if d.size == 0:
        raise SurvivalError("no durations")
    if d.shape != c.shape:
        raise SurvivalError("durations and censoring flags differ in length")
    if (d < 0).any():
        raise SurvivalError("negative duration")
    if horizon < 1:
        raise SurvivalError("horizon must be >= 1")
    d = d.astype(np.int64)
    event = ~c & (d <= horizon)
    d = np.minimum(d, horizon)
    times = np.arange(horizon + 1)
    events = np.bincount(d[event], minlength=horizon + 1)[: horizon + 1]
    exits = np.bincount(d, minlength=horizon + 1)[: horizon + 1]
    at_risk = d.size - np.concatenate([[0], np.cumsum(exits)[:-1]])
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(at_risk > 0, (at_risk - events) / np.maximum(at_risk, 1), 1.0)
    return SurvivalCurve(times, np.cumprod(factor), at_risk, events)
