import math
from functools import partial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdid.data import CovariateSpec, EstimandRequest, ObservationRecord, Panel
from cdid.effects import (
    BootstrapConfig,
    CellMeans,
    CellSample,
    MatchingConfig,
    bootstrap_distribution,
    bootstrap_inference,
    conditional_effect,
    estimate_effect,
    point_estimate,
    prepare_cells,
    subgroup_effects,
    unconditional_effect,
)
from cdid.errors import CDiDError, InferenceError, RankWarning
from cdid.market import MarketSimConfig, simulate_panel

SPEC = CovariateSpec.parse("age:continuous:2, mileage, private_seller:binary")


@pytest.fixture(scope="module")
def panel():
    return simulate_panel(MarketSimConfig(n_agents=400, seed=3, shock=0.08, age_group_shift=-0.5))


def _with(panel, **changes):
    fields = {f: getattr(panel, f) for f in panel.__dataclass_fields__}
    fields.update(changes)
    return Panel(**fields)


def test_did_arithmetic():
    assert CellMeans(0.58, 0.54, 0.53, 0.52).did == pytest.approx(0.03, abs=1e-15)
    assert CellMeans(0.4, 0.4, 0.4, 0.4).did == 0.0


def _cell_records(shares):
    """Records whose diesel share in each (g, t) cell equals shares[(g, t)] (multiples of 1/100)."""
    out, i = [], 0
    for (g, t), s in shares.items():
        k = round(100 * s)
        for j in range(100):
            out.append(ObservationRecord(str(i), g, t, int(j < k), 1.0))
            i += 1
    return out


def test_unconditional_effect_on_records():
    recs = _cell_records({(1, 1): 0.58, (1, 0): 0.54, (0, 1): 0.53, (0, 0): 0.52})
    est = unconditional_effect(recs, EstimandRequest(period=1))
    assert est.point == pytest.approx(0.03, abs=1e-12)
    assert est.n_reference == 100 and est.n_comparison == 300


@given(st.lists(st.integers(0, 100), min_size=4, max_size=4))
def test_group_swap_flips_sign(ks):
    shares = dict(zip([(1, 1), (1, 0), (0, 1), (0, 0)], [k / 100 for k in ks]))
    swapped = {(1 - g, t): s for (g, t), s in shares.items()}
    a = unconditional_effect(_cell_records(shares), EstimandRequest(period=1)).point
    b = unconditional_effect(_cell_records(swapped), EstimandRequest(period=1)).point
    assert a == pytest.approx(-b, abs=1e-12)


def test_constant_outcome_gives_exact_zero(panel):
    flat = _with(panel, price=np.full(len(panel), 7.25))
    req = EstimandRequest("asking_price", 2)
    assert conditional_effect(flat, req, SPEC).point == 0.0
    assert unconditional_effect(flat, req).point == 0.0


def test_constant_shift_invariance(panel):
    req = EstimandRequest("asking_price", 1)
    a = conditional_effect(panel, req, SPEC).point
    b = conditional_effect(_with(panel, price=panel.price + 3.0), req, SPEC).point
    assert a == pytest.approx(b, abs=1e-10)


def test_price_scale_equivariance(panel):
    req = EstimandRequest("asking_price", 1)
    boot = BootstrapConfig(replications=20, seed=5)
    a = estimate_effect(panel, req, SPEC, bootstrap=boot)
    b = estimate_effect(_with(panel, price=panel.price * 2.5), req, SPEC, bootstrap=boot)
    assert b.point == pytest.approx(2.5 * a.point, rel=1e-9)
    assert b.se == pytest.approx(2.5 * a.se, rel=1e-9)


def test_empty_spec_conditional_equals_unconditional(panel):
    req = EstimandRequest("diesel_share", 2)
    assert conditional_effect(panel, req, CovariateSpec()).point == unconditional_effect(panel, req).point


def test_constant_covariate_matches_unconditional(panel):
    # intercept-only probit: every score equal, weights uniform, no slope to adjust with
    flat = _with(panel, covariates={"c": np.ones(len(panel))})
    req = EstimandRequest("diesel_share", 2)
    with pytest.warns(RankWarning):
        cond = conditional_effect(flat, req, CovariateSpec.parse("c")).point
    assert cond == pytest.approx(unconditional_effect(flat, req).point, abs=1e-10)


def test_order_invariance(panel):
    req = EstimandRequest("asking_price", 3)
    perm = np.random.default_rng(0).permutation(len(panel))
    a = conditional_effect(panel, req, SPEC).point
    b = conditional_effect(panel.take(perm), req, SPEC).point
    assert a == pytest.approx(b, abs=1e-10)


def test_independent_covariates_conditional_close_to_unconditional():
    cfg = MarketSimConfig(n_agents=1500, seed=4, shock=0.08)
    p = simulate_panel(cfg)
    req = EstimandRequest("diesel_share", 1)
    cond = conditional_effect(p, req, SPEC).point
    unc = unconditional_effect(p, req).point
    assert abs(cond - unc) < 0.02


def test_bootstrap_degenerate_se_zero(panel):
    flat = _with(panel, price=np.full(len(panel), 2.0))
    est = estimate_effect(flat, EstimandRequest("asking_price", 1), SPEC, bootstrap=BootstrapConfig(replications=10))
    assert est.se == 0.0 and est.ci_low == est.point == est.ci_high == 0.0
    assert math.isnan(est.t_stat)


def test_bootstrap_ci_and_t(panel):
    est = estimate_effect(panel, EstimandRequest("diesel_share", 1), SPEC, bootstrap=BootstrapConfig(replications=30))
    assert est.se > 0
    assert est.t_stat == pytest.approx(est.point / est.se)
    assert est.ci_low == pytest.approx(est.point - 1.96 * est.se)
    assert est.ci_low <= est.point <= est.ci_high
    assert est.replications == 30 and est.discarded == 0


def test_percentile_interval(panel):
    est = estimate_effect(panel, EstimandRequest("diesel_share", 1), SPEC,
                          bootstrap=BootstrapConfig(replications=40, ci="percentile"))
    assert est.ci_low < est.ci_high


def test_bootstrap_seed_determinism_and_parallel(panel):
    cells = prepare_cells(panel, EstimandRequest("asking_price", 1), SPEC)
    est = partial(point_estimate, conditional=True, cfg=MatchingConfig())
    a = bootstrap_distribution(cells, est, 8, seed=11, workers=1)
    b = bootstrap_distribution(cells, est, 8, seed=11, workers=2)
    c = bootstrap_distribution(cells, est, 8, seed=12, workers=1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_bootstrap_resampling_keeps_cell_sizes():
    cells = {k: CellSample(np.arange(n, dtype=float), np.empty((n, 0))) for k, n in
             zip([(1, 1), (1, 0), (0, 1), (0, 0)], (3, 5, 7, 11))}
    sizes = []

    def est(c):
        sizes.append(tuple(len(c[k]) for k in sorted(c)))
        return 0.0

    bootstrap_distribution(cells, est, 5, seed=0, workers=1)
    assert set(sizes) == {(11, 7, 5, 3)}


class _Flaky:
    def __init__(self, every):
        self.every, self.calls = every, 0

    def __call__(self, cells):
        self.calls += 1
        if self.calls % self.every == 0:
            raise CDiDError("boom")
        return float(np.mean(cells[(1, 1)].y))


def _toy_cells():
    rng = np.random.default_rng(0)
    return {k: CellSample(rng.normal(size=20), np.empty((20, 0))) for k in [(1, 1), (1, 0), (0, 1), (0, 0)]}


def test_discarded_replications_counted():
    est = bootstrap_inference(_toy_cells(), _Flaky(20), BootstrapConfig(replications=100, workers=1), point=0.0)
    assert est.discarded == 5


def test_too_many_discards_raise():
    with pytest.raises(InferenceError):
        bootstrap_inference(_toy_cells(), _Flaky(5), BootstrapConfig(replications=100, workers=1), point=0.0)


def test_bootstrap_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(replications=1)
    with pytest.raises(ValueError):
        BootstrapConfig(ci="bca")


def test_subgroup_table_layout(panel):
    t = subgroup_effects(panel, EstimandRequest("diesel_share", 1, conditional=False), "emission_standard",
                         bootstrap=BootstrapConfig(replications=5))
    assert set(t.rows) == {"below_euro5", "euro5", "euro6"}
    assert t.months == (1, 2, 3, 4, 5, 6, 7)
    f = t.formatted()
    assert f[0] == ["", "1", "2", "3", "4", "5", "6", "7"]
    assert len(f) == 1 + 2 * 3 and all(len(r) == 8 for r in f)
    assert f[2][1].startswith("(") and f[2][1].endswith(")")


def test_single_category_equals_unpartitioned(panel):
    one = _with(panel, tags={**panel.tags, "seller_type": np.full(len(panel), "dealer", dtype=object)})
    req = EstimandRequest("asking_price", 2)
    boot = BootstrapConfig(replications=5)
    a = subgroup_effects(one, req, "seller_type", SPEC, bootstrap=boot, months=(2,))
    b = subgroup_effects(one, req, None, SPEC, bootstrap=boot, months=(2,))
    assert a.cell("dealer", 2).point == b.cell("all", 2).point
    assert a.cell("dealer", 2).se == b.cell("all", 2).se


def test_empty_subgroup_is_skipped_with_note(panel):
    t = subgroup_effects(panel, EstimandRequest("diesel_share", 1, conditional=False), "vehicle_class",
                         bootstrap=None, months=(1,), categories=["small", "hovercraft"])
    assert t.cell("hovercraft", 1) is None
    assert any("hovercraft" in n for n in t.notes)
    assert t.formatted()[3][1] == "n/a"
