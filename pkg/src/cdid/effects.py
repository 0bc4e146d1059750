"""Unconditional and matched difference-in-differences with bootstrap inference."""
from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Iterable, Mapping

import numpy as np

from .data import (
    CELL_KEYS,
    GERMAN_MAKES,
    N_PERIODS,
    CovariateSpec,
    DesignMatrix,
    EffectEstimate,
    EstimandRequest,
    Panel,
    apply_covariate_spec,
    as_panel,
    partition_cells,
)
from .errors import CDiDError, InferenceError, RankWarning
from .matching import (
    KERNEL_ETA,
    AdjustedMean,
    MatchResult,
    adjusted_mean_details,
    compute_radius,
    nearest_neighbor_distances,
    radius_match,
    trim_support,
)
from .probit import PropensityModel, fit_probit, predict_score

log = logging.getLogger(__name__)

REFERENCE = (1, 0)
COMPARISONS = ((1, 1), (0, 1), (0, 0))


@dataclass(frozen=True)
class MatchingConfig:
    kernel: str = "triangular"
    radius_fraction: float = 0.9
    radius_quantile: float = 0.9
    eta: float = KERNEL_ETA
    probit_tol: float = 1e-8
    probit_max_iter: int = 100
    separation_bound: float = 50.0
    bias_adjust: bool = True


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 499
    seed: int = 0
    workers: int | None = None
    ci: str = "normal"
    max_discard_fraction: float = 0.10

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("need at least 2 bootstrap replications")
        if self.ci not in ("normal", "percentile"):
            raise ValueError(f"unknown CI method {self.ci!r}")


@dataclass
class CellSample:
    y: np.ndarray
    X: np.ndarray

    def __len__(self):
        return len(self.y)

    def take(self, idx) -> "CellSample":
        return CellSample(self.y[idx], self.X[idx])


@dataclass
class CellMeans:
    m11: float
    m10: float
    m01: float
    m00: float
    adjusted: bool = False

    @property
    def did(self) -> float:
        return (self.m11 - self.m10) - (self.m01 - self.m00)


@dataclass
class ComparisonDetail:
    cell: tuple[int, int]
    model: PropensityModel | None
    ref_scores: np.ndarray
    comp_scores: np.ndarray
    match: MatchResult | None
    adjusted: AdjustedMean | None
    mean: float


def outcome_values(panel: Panel, outcome: str) -> np.ndarray:
    if outcome == "diesel_share":
        return panel.fuel.astype(float)
    return panel.price.astype(float)


def prepare_cells(
    data,
    request: EstimandRequest,
    spec: CovariateSpec | None = None,
    german_makes: Iterable[str] = GERMAN_MAKES,
    design: DesignMatrix | None = None,
) -> dict[tuple[int, int], CellSample]:
    """Outcome vectors and standardized covariate rows for the four cells."""
    panel = as_panel(data)
    if design is None:
        design = apply_covariate_spec(panel, spec or CovariateSpec())
    y = outcome_values(panel, request.outcome)
    idx = partition_cells(panel, request, german_makes)
    return {k: CellSample(y[i], design.values[i]) for k, i in idx.items()}


def unconditional_means(cells: Mapping[tuple[int, int], CellSample]) -> CellMeans:
    return CellMeans(*(float(np.mean(cells[k].y)) for k in CELL_KEYS), adjusted=False)


def match_comparison(ref: CellSample, comp: CellSample, cfg: MatchingConfig, cell=(0, 0)) -> ComparisonDetail:
    """Reweight one comparison cell towards the reference covariate distribution."""
    if ref.X.shape[1] == 0:
        m = float(np.mean(comp.y))
        return ComparisonDetail(cell, None, np.empty(0), np.empty(0), None, None, m)
    X = np.vstack([ref.X, comp.X])
    labels = np.concatenate([np.ones(len(ref)), np.zeros(len(comp))])
    model = fit_probit(
        X, labels, tol=cfg.probit_tol, max_iter=cfg.probit_max_iter, separation_bound=cfg.separation_bound
    )
    if not model.converged:
        log.warning("probit for cell %s did not converge (gradient norm %.3g)", cell, model.final_gradient_norm)
    ref_s = predict_score(model, ref.X)
    comp_s = predict_score(model, comp.X)
    support = trim_support(ref_s, comp_s)
    radius = compute_radius(
        nearest_neighbor_distances(ref_s[support], comp_s), cfg.radius_fraction, cfg.radius_quantile
    )
    match = radius_match(ref_s, comp_s, radius, on_support=support, kernel=cfg.kernel, eta=cfg.eta)
    if cfg.bias_adjust:
        adj = adjusted_mean_details(match, comp.y, comp.X, ref.X[support].mean(axis=0))
    else:
        raw = float(match.aggregate_weights() @ comp.y)
        adj = AdjustedMean(raw, raw, np.zeros(ref.X.shape[1]), np.arange(0))
    return ComparisonDetail(cell, model, ref_s, comp_s, match, adj, adj.adjusted)


def conditional_means(
    cells: Mapping[tuple[int, int], CellSample], cfg: MatchingConfig = MatchingConfig()
) -> tuple[CellMeans, dict[tuple[int, int], ComparisonDetail]]:
    ref = cells[REFERENCE]
    details = {k: match_comparison(ref, cells[k], cfg, k) for k in COMPARISONS}
    means = CellMeans(
        m11=details[(1, 1)].mean,
        m10=float(np.mean(ref.y)),
        m01=details[(0, 1)].mean,
        m00=details[(0, 0)].mean,
        adjusted=True,
    )
    return means, details


def point_estimate(cells, conditional: bool, cfg: MatchingConfig = MatchingConfig()) -> float:
    if conditional:
        return conditional_means(cells, cfg)[0].did
    return unconditional_means(cells).did


def _sizes(cells):
    n_ref = len(cells[REFERENCE])
    return n_ref, sum(len(c) for k, c in cells.items() if k != REFERENCE)


def unconditional_effect(data, request: EstimandRequest, german_makes=GERMAN_MAKES) -> EffectEstimate:
    """Raw-means difference in differences (point only)."""
    cells = prepare_cells(data, request, CovariateSpec(), german_makes)
    n_ref, n_comp = _sizes(cells)
    return EffectEstimate(unconditional_means(cells).did, n_reference=n_ref, n_comparison=n_comp)


def conditional_effect(
    data,
    request: EstimandRequest,
    spec: CovariateSpec,
    matching: MatchingConfig = MatchingConfig(),
    german_makes=GERMAN_MAKES,
) -> EffectEstimate:
    """Matched difference in differences aggregated over the treated pre-period cell (point only)."""
    cells = prepare_cells(data, request, spec, german_makes)
    n_ref, n_comp = _sizes(cells)
    return EffectEstimate(point_estimate(cells, True, matching), n_reference=n_ref, n_comparison=n_comp)


# --- bootstrap ----------------------------------------------------------------


def _replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep]))


def resample_cells(cells, rng: np.random.Generator):
    """Draw with replacement inside every cell, keeping the cell sizes."""
    out = {}
    for k in sorted(cells):
        n = len(cells[k])
        out[k] = cells[k].take(rng.integers(0, n, size=n))
    return out


def _run_replications(cells, estimator, seed, reps) -> list[float]:
    values = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankWarning)
        for b in reps:
            try:
                values.append(float(estimator(resample_cells(cells, _replication_rng(seed, b)))))
            except (CDiDError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.debug("replication %d discarded: %s", b, exc)
                values.append(math.nan)
    return values


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("CDID_WORKERS", "1")))
    except ValueError:
        return 1


def bootstrap_distribution(cells, estimator: Callable, replications: int, seed: int, workers: int | None = None):
    """Replication estimates in replication order (NaN marks a failure).

    Replication ``b`` always uses the RNG stream derived from ``(seed, b)``,
    so the result does not depend on ``workers``.
    """
    workers = default_workers() if workers is None else workers
    if workers <= 1 or replications < 2 * workers:
        return np.array(_run_replications(cells, estimator, seed, range(replications)))
    chunks = np.array_split(np.arange(replications), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_replications, [cells] * len(chunks), [estimator] * len(chunks),
                         [seed] * len(chunks), [c.tolist() for c in chunks])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def bootstrap_inference(
    cells,
    estimator: Callable,
    config: BootstrapConfig = BootstrapConfig(),
    point: float | None = None,
) -> EffectEstimate:
    """Stratified nonparametric bootstrap around ``estimator(cells)``.

    The standard error is the standard deviation (ddof=1) of the replication
    estimates; the default interval is ``point +/- 1.96 se``.
    """
    if point is None:
        point = float(estimator(cells))
    draws = bootstrap_distribution(cells, estimator, config.replications, config.seed, config.workers)
    ok = draws[np.isfinite(draws)]
    discarded = int(draws.size - ok.size)
    if discarded > config.max_discard_fraction * config.replications or ok.size < 2:
        raise InferenceError(f"{discarded} of {config.replications} bootstrap replications failed")
    se = float(np.std(ok, ddof=1))
    if se > 0:
        t = point / se
    else:
        se = 0.0
        t = math.nan if point == 0 else math.copysign(math.inf, point)
    if config.ci == "percentile" and se > 0:
        lo, hi = (float(v) for v in np.percentile(ok, [2.5, 97.5]))
    else:
        lo, hi = point - 1.96 * se, point + 1.96 * se
    n_ref, n_comp = _sizes(cells)
    return EffectEstimate(
        point=point,
        se=se,
        t_stat=t,
        ci_low=lo,
        ci_high=hi,
        n_reference=n_ref,
        n_comparison=n_comp,
        replications=config.replications,
        discarded=discarded,
    )


def estimate_effect(
    data,
    request: EstimandRequest,
    spec: CovariateSpec | None = None,
    matching: MatchingConfig = MatchingConfig(),
    bootstrap: BootstrapConfig | None = BootstrapConfig(),
    german_makes=GERMAN_MAKES,
    design: DesignMatrix | None = None,
) -> EffectEstimate:
    """Point estimate for ``request`` plus bootstrap inference (skipped when ``bootstrap`` is None)."""
    cells = prepare_cells(data, request, spec if request.conditional else CovariateSpec(), german_makes,
                          design if request.conditional else None)
    estimator = partial(point_estimate, conditional=request.conditional, cfg=matching)
    point = float(estimator(cells))
    if bootstrap is None:
        n_ref, n_comp = _sizes(cells)
        return EffectEstimate(point, n_reference=n_ref, n_comparison=n_comp)
    return bootstrap_inference(cells, estimator, bootstrap, point=point)


# --- subgroup tables ------------------------------------------------------------


@dataclass
class EffectsTable:
    """Effects by row label (subgroup category) and post month."""

    title: str
    months: tuple[int, ...]
    rows: dict[str, dict[int, EffectEstimate | None]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def cell(self, row: str, month: int) -> EffectEstimate | None:
        return self.rows[row].get(month)

    def formatted(self, digits: int = 3) -> list[list[str]]:
        """Publication layout: point with stars, standard error in parentheses below."""
        out = [[""] + [str(m) for m in self.months]]
        for label, row in self.rows.items():
            pts, ses = [label], [""]
            for m in self.months:
                est = row.get(m)
                if est is None:
                    pts.append("n/a")
                    ses.append("")
                    continue
                pts.append(f"{est.point:.{digits}f}{est.stars}")
                ses.append(f"({est.se:.{digits}f})" if math.isfinite(est.se) else "")
            out.extend([pts, ses])
        return out


def subgroup_effects(
    data,
    request: EstimandRequest,
    tag: str | None,
    spec: CovariateSpec | None = None,
    matching: MatchingConfig = MatchingConfig(),
    bootstrap: BootstrapConfig | None = BootstrapConfig(),
    months: Iterable[int] = range(1, N_PERIODS),
    categories: Iterable[str] | None = None,
    german_makes=GERMAN_MAKES,
) -> EffectsTable:
    """One row per category of ``tag`` (or a single 'all' row when tag is None), one column per month.

    Subgroups whose cells are empty or whose estimation fails are reported as
    missing entries with a note instead of aborting the table.
    """
    panel = as_panel(data)
    months = tuple(months)
    design = apply_covariate_spec(panel, spec or CovariateSpec()) if request.conditional else None
    if tag is None:
        labels = [("all", None)]
    else:
        cats = list(categories) if categories is not None else sorted(set(panel.tags[tag].tolist()))
        labels = [(c, (tag, c)) for c in cats]
    title = f"{request.outcome} by {tag or 'all'} ({'matched' if request.conditional else 'unconditional'})"
    table = EffectsTable(title, months)
    for label, sub in labels:
        row = {}
        for m in months:
            req = EstimandRequest(request.outcome, m, request.control_definition, sub, request.conditional)
            try:
                row[m] = estimate_effect(panel, req, spec, matching, bootstrap, german_makes, design)
            except CDiDError as exc:
                row[m] = None
                table.notes.append(f"{label}, month {m}: skipped ({exc})")
                log.warning("subgroup %s month %d skipped: %s", label, m, exc)
        table.rows[label] = row
    return table
