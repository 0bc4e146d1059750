"""Used-car sorting model and a synthetic listing generator built on it.

Potential sellers own one car of quality ``q`` and draw a taste for quality
``theta ~ U[1, theta_high]``. Buyers all have taste 1, so the used price is
``P(q) = q``. A seller lists the car when the utility of trading it in for a
new car, ``theta (q_new - q) - (p_new - q)``, is positive.

:func:`simulate_panel` turns this into a listing panel. Car age drives
quality and its distribution differs across groups and periods, which
confounds unconditional comparisons. :func:`true_effect` evaluates the
population estimands of the generator by quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy import stats

from .data import (
    CONTROL_MAKES,
    EMISSION_STANDARDS,
    N_PERIODS,
    SELLER_TYPES,
    VEHICLE_CLASSES,
    Panel,
)
from .errors import ConfigError, DomainError

FUELS = (0, 1)


@dataclass(frozen=True)
class MarketSimConfig:
    theta_high: float = 2.0
    q_new: float = 2.0
    p_new: float = 3.0
    # quality = base_quality[fuel] - age_slope[fuel] * age + offset[(g, f, t)] (+ uniform spread)
    base_quality: tuple[float, float] = (0.85, 0.85)  # (gasoline, diesel)
    age_slope: tuple[float, float] = (0.06, 0.03)
    quality_offsets: Mapping[tuple[int, int, int], float] = field(default_factory=dict)
    quality_spread: float = 0.0
    shock: float = 0.0
    shock_periods: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7)
    shock_emission_standards: tuple[str, ...] | None = None
    emission_probs: tuple[float, float, float] = (0.3, 0.5, 0.2)
    # car age ~ age_max * Beta with the cell mean below and fixed concentration
    age_max: float = 12.0
    age_mean: float = 5.0
    age_group_shift: float = 0.0
    age_drift_treated: float = 0.0
    age_drift_control: float = 0.0
    age_concentration: float = 4.0
    mileage_per_year: float = 15.0
    mileage_noise: float = 10.0
    price_scale: float = 1.0
    price_noise: float = 0.02  # half-width of the additive uniform noise
    hazard: float = 0.06
    observation_window: int = 60
    n_agents: int = 1000  # potential sellers per (group, period, fuel) cell
    seed: int = 0

    def __post_init__(self):
        validate_config(self)

    def with_(self, **changes) -> "MarketSimConfig":
        return replace(self, **changes)


def validate_config(cfg: MarketSimConfig) -> None:
    if not cfg.theta_high > 1:
        raise ConfigError(f"theta_high must exceed 1, got {cfg.theta_high}")
    if not cfg.q_new > 0:
        raise ConfigError("q_new must be positive")
    if not cfg.theta_high * cfg.q_new > cfg.p_new >= cfg.q_new:
        raise ConfigError("need theta_high * q_new > p_new >= q_new")
    if cfg.shock < 0:
        raise ConfigError("shock must be >= 0")
    if cfg.n_agents < 1:
        raise ConfigError("n_agents must be positive")
    if not 0 < cfg.age_mean < cfg.age_max:
        raise ConfigError("age_mean must lie inside (0, age_max)")
    if abs(sum(cfg.emission_probs) - 1) > 1e-9 or min(cfg.emission_probs) < 0:
        raise ConfigError("emission_probs must be a probability vector")
    if cfg.shock_emission_standards is not None:
        bad = set(cfg.shock_emission_standards) - set(EMISSION_STANDARDS)
        if bad:
            raise ConfigError(f"unknown emission standards {sorted(bad)}")
    for g in (0, 1):
        for t in range(N_PERIODS):
            m = _age_mean(cfg, g, t)
            if not 0 < m < cfg.age_max:
                raise ConfigError(f"mean age {m:.3g} in cell G={g}, T={t} leaves (0, age_max)")
            for f in FUELS:
                hi = _quality(cfg, g, f, t, 0.0) + cfg.quality_spread
                worst = cfg.shock if (g == 1 and f == 1 and t in cfg.shock_periods) else 0.0
                lo = _quality(cfg, g, f, t, cfg.age_max) - cfg.quality_spread - worst
                if not (lo > 0 and hi < cfg.q_new):
                    raise ConfigError(
                        f"quality range ({lo:.3g}, {hi:.3g}) in cell G={g}, F={f}, T={t} "
                        f"is not inside (0, q_new={cfg.q_new})"
                    )
                if cfg.price_noise >= lo:
                    raise ConfigError("price_noise must be smaller than the lowest quality")


def _check_q(q, cfg):
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0) or np.any(q >= cfg.q_new):
        raise DomainError(f"quality must lie in (0, q_new={cfg.q_new})")
    return q


def trade_utility(theta, q, cfg: MarketSimConfig):
    """theta (q_new - q) - (p_new - q)."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 1) or np.any(theta > cfg.theta_high):
        raise DomainError(f"theta must lie in [1, theta_high={cfg.theta_high}]")
    q = _check_q(q, cfg)
    u = theta * (cfg.q_new - q) - (cfg.p_new - q)
    return float(u) if u.ndim == 0 else u


def seller_threshold(q, cfg: MarketSimConfig):
    """Taste above which an owner of quality ``q`` trades: (p_new - q) / (q_new - q)."""
    q = _check_q(q, cfg)
    t = (cfg.p_new - q) / (cfg.q_new - q)
    return float(t) if t.ndim == 0 else t


def supply_share(q, cfg: MarketSimConfig):
    """Share of owners of quality ``q`` who offer their car, 1 - H(theta*)."""
    t = np.asarray(seller_threshold(q, cfg))
    s = np.clip(1.0 - (t - 1.0) / (cfg.theta_high - 1.0), 0.0, 1.0)
    return float(s) if s.ndim == 0 else s


def used_price(q):
    """Market price of a used car of quality ``q`` (buyers have unit taste)."""
    return q


def _age_mean(cfg, g, t):
    drift = cfg.age_drift_treated if g == 1 else cfg.age_drift_control
    return cfg.age_mean + cfg.age_group_shift * g + drift * t


def _age_law(cfg, g, t):
    m = _age_mean(cfg, g, t) / cfg.age_max
    c = cfg.age_concentration
    return stats.beta(m * c, (1 - m) * c, scale=cfg.age_max)


def _quality(cfg, g, f, t, age):
    return cfg.base_quality[f] - cfg.age_slope[f] * np.asarray(age) + cfg.quality_offsets.get((g, f, t), 0.0)


def _shock(cfg, g, f, t, emission=None):
    """Quality loss of a car; ``emission`` is required when the shock is stratified."""
    if not (g == 1 and f == 1 and t in cfg.shock_periods):
        return 0.0
    if cfg.shock_emission_standards is None:
        return cfg.shock
    return cfg.shock * np.isin(emission, list(cfg.shock_emission_standards)).astype(float)


def _rng_for_cell(seed, g, t, f):
    return np.random.default_rng(np.random.SeedSequence([seed, g, t, f]))


def simulate_panel(cfg: MarketSimConfig) -> Panel:
    """Draw a listing panel from the sorting model.

    Every (group, period, fuel) cell has ``n_agents`` potential sellers with
    their own RNG stream derived from the seed. Only cars whose owners trade
    are emitted. ``panel.meta["potential"]`` keeps the number of potential
    sellers per cell.
    """
    validate_config(cfg)
    parts = []
    for g in (0, 1):
        for t in range(N_PERIODS):
            for f in FUELS:
                parts.append(_simulate_cell(cfg, g, t, f))
    cols = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    n = len(cols["group"])
    return Panel(
        ids=np.array([f"sim{i}" for i in range(n)], dtype=object),
        group=cols["group"].astype(np.int8),
        period=cols["period"].astype(np.int8),
        fuel=cols["fuel"].astype(np.int8),
        price=cols["price"],
        covariates={
            "age": cols["age"],
            "mileage": cols["mileage"],
            "private_seller": cols["private_seller"],
        },
        tags={
            "emission_standard": cols["emission_standard"],
            "vehicle_class": cols["vehicle_class"],
            "seller_type": cols["seller_type"],
        },
        make=cols["make"],
        duration_days=cols["duration_days"].astype(np.int64),
        censored=cols["censored"].astype(bool),
        meta={"potential": {(g, t, f): cfg.n_agents for g in (0, 1) for t in range(N_PERIODS) for f in FUELS}},
    )


def _simulate_cell(cfg, g, t, f):
    rng = _rng_for_cell(cfg.seed, g, t, f)
    n = cfg.n_agents
    age = _age_law(cfg, g, t).rvs(size=n, random_state=rng)
    emission = np.asarray(EMISSION_STANDARDS, dtype=object)[rng.choice(3, size=n, p=cfg.emission_probs)]
    q = _quality(cfg, g, f, t, age)
    if cfg.quality_spread > 0:
        q = q + rng.uniform(-cfg.quality_spread, cfg.quality_spread, size=n)
    q = q - _shock(cfg, g, f, t, emission)
    theta = rng.uniform(1.0, cfg.theta_high, size=n)
    listed = theta * (cfg.q_new - q) - (cfg.p_new - q) > 0

    m = int(listed.sum())
    age, q, emission = age[listed], q[listed], emission[listed]
    price = cfg.price_scale * (used_price(q) + rng.uniform(-cfg.price_noise, cfg.price_noise, size=m))
    mileage = np.clip(cfg.mileage_per_year * age + rng.normal(0.0, cfg.mileage_noise, size=m), 0.0, None)
    seller = np.asarray(SELLER_TYPES, dtype=object)[rng.integers(0, 3, size=m)]
    vclass = np.asarray(VEHICLE_CLASSES, dtype=object)[rng.integers(0, 5, size=m)]
    if g == 1:
        make = np.full(m, "VW", dtype=object)
    else:
        make = np.asarray(CONTROL_MAKES, dtype=object)[rng.integers(0, len(CONTROL_MAKES), size=m)]
    dur = rng.geometric(cfg.hazard, size=m) - 1
    censored = dur > cfg.observation_window
    dur = np.minimum(dur, cfg.observation_window)
    return {
        "group": np.full(m, g),
        "period": np.full(m, t),
        "fuel": np.full(m, f),
        "price": price,
        "age": age,
        "mileage": mileage,
        "private_seller": (seller == "private").astype(float),
        "emission_standard": emission,
        "vehicle_class": vclass,
        "seller_type": seller,
        "make": make,
        "duration_days": dur,
        "censored": censored,
    }


# --- population truth -------------------------------------------------------

_GL_NODES = 400


def _age_grid(cfg):
    x, w = np.polynomial.legendre.leggauss(_GL_NODES)
    return 0.5 * cfg.age_max * (x + 1), 0.5 * cfg.age_max * w


def _listing_moments(cfg, g, t, f, age, emission=None):
    """Per-age listing rate and mean listed quality, mixing over standards and spread."""
    strata = EMISSION_STANDARDS if emission is None else (emission,)
    probs = cfg.emission_probs if emission is None else (1.0,)
    if cfg.quality_spread > 0:
        u, uw = np.polynomial.legendre.leggauss(64)
        u, uw = u * cfg.quality_spread, uw / 2
    else:
        u, uw = np.zeros(1), np.ones(1)
    rate = np.zeros_like(age)
    qsum = np.zeros_like(age)
    for e, pe in zip(strata, probs):
        shock = float(_shock(cfg, g, f, t, e))
        for du, wu in zip(u, uw):
            q = _quality(cfg, g, f, t, age) + du - shock
            s = supply_share(q, cfg)
            rate += pe * wu * s
            qsum += pe * wu * s * q
    with np.errstate(invalid="ignore", divide="ignore"):
        qmean = np.where(rate > 0, qsum / rate, np.nan)
    return rate, qmean


def cell_truth(cfg: MarketSimConfig, g: int, t: int, emission: str | None = None):
    """Age grid, listing-age density and conditional outcome means for one (g, t) cell."""
    age, w = _age_grid(cfg)
    dens = _age_law(cfg, g, t).pdf(age)
    rate_g, _ = _listing_moments(cfg, g, t, 0, age, emission)
    rate_d, q_d = _listing_moments(cfg, g, t, 1, age, emission)
    listing_all = dens * (rate_g + rate_d)
    listing_d = dens * rate_d
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(rate_g + rate_d > 0, rate_d / (rate_g + rate_d), np.nan)
    return {
        "age": age,
        "w": w,
        "listing_all": listing_all,
        "listing_diesel": listing_d,
        "share": share,
        "price": cfg.price_scale * q_d,
    }


def _expect(values, density, w):
    ok = density > 0
    return float(np.sum((values * density * w)[ok]) / np.sum((density * w)[ok]))


def true_effect(
    cfg: MarketSimConfig,
    period: int,
    outcome: str = "diesel_share",
    conditional: bool = True,
    emission: str | None = None,
) -> float:
    """Population difference-in-differences implied by the generator.

    The unconditional value contrasts raw listing means. The conditional value
    averages the age-specific contrast over the listing-age distribution of
    the treated pre-period cell (diesel listings for the price outcome).
    """
    cells = {(g, p): cell_truth(cfg, g, period if p else 0, emission) for g in (0, 1) for p in (0, 1)}
    key = "share" if outcome == "diesel_share" else "price"
    dens_key = "listing_all" if outcome == "diesel_share" else "listing_diesel"
    w = cells[(1, 0)]["w"]
    if not conditional:
        m = {k: _expect(c[key], c[dens_key], w) for k, c in cells.items()}
        return (m[(1, 1)] - m[(1, 0)]) - (m[(0, 1)] - m[(0, 0)])
    contrast = (cells[(1, 1)][key] - cells[(1, 0)][key]) - (cells[(0, 1)][key] - cells[(0, 0)][key])
    return _expect(contrast, cells[(1, 0)][dens_key], w)
