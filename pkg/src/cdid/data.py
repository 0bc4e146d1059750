"""Observation schema, covariate specification and estimand selection.

Records can be handled one at a time through :class:`ObservationRecord`, but
all numerical work happens on the columnar :class:`Panel`, which holds the
same fields as numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EstimandError, SchemaError, ValidationError

N_PERIODS = 8
TAG_NAMES = ("emission_standard", "vehicle_class", "seller_type")

EMISSION_STANDARDS = ("below_euro5", "euro5", "euro6")
VEHICLE_CLASSES = ("small", "compact", "medium", "minivan", "suv")
SELLER_TYPES = ("private", "dealer", "dealer_warranty")

GERMAN_MAKES = ("Mercedes", "BMW", "Opel", "Ford")
CONTROL_MAKES = GERMAN_MAKES + ("Renault", "Peugeot", "Fiat", "Toyota")

OUTCOMES = ("diesel_share", "asking_price")
CONTROL_DEFINITIONS = ("all_other_makes", "non_german_makes")


@dataclass(frozen=True)
class ObservationRecord:
    id: str
    group: int
    period: int
    fuel: int
    price: float
    covariates: Mapping[str, float] = field(default_factory=dict)
    emission_standard: str = ""
    vehicle_class: str = ""
    seller_type: str = ""
    make: str = ""
    duration_days: int = 0
    censored: bool = False

    def __post_init__(self):
        if self.group not in (0, 1):
            raise ValidationError(f"record {self.id}: group must be 0 or 1, got {self.group!r}")
        if self.fuel not in (0, 1):
            raise ValidationError(f"record {self.id}: fuel must be 0 or 1, got {self.fuel!r}")
        if not (isinstance(self.period, (int, np.integer)) and 0 <= self.period < N_PERIODS):
            raise ValidationError(f"record {self.id}: period must be in 0..7, got {self.period!r}")
        if not (math.isfinite(self.price) and self.price >= 0):
            raise ValidationError(f"record {self.id}: price must be finite and >= 0, got {self.price!r}")
        if self.duration_days < 0:
            raise ValidationError(f"record {self.id}: duration_days must be >= 0")

    @property
    def tags(self) -> dict[str, str]:
        return {name: getattr(self, name) for name in TAG_NAMES}


def assign_period(days_since_disclosure: int) -> int | None:
    """Bucket a first-online date into the analysis period.

    Listings from the 30 days before disclosure form period 0; post-disclosure
    listings fall into consecutive 30-day windows 1..7. Anything else is
    outside the analysis window and returns None.
    """
    d = int(days_since_disclosure)
    if -30 <= d < 0:
        return 0
    if d >= 0:
        p = 1 + d // 30
        return p if p < N_PERIODS else None
    return None


@dataclass(frozen=True)
class CovariateEntry:
    name: str
    kind: str = "continuous"
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("binary", "continuous"):
            raise ValidationError(f"covariate {self.name}: kind must be binary or continuous")
        if self.degree < 1:
            raise ValidationError(f"covariate {self.name}: polynomial degree must be >= 1")
        if self.kind == "binary" and self.degree != 1:
            raise ValidationError(f"covariate {self.name}: binary covariates take no polynomial")

    def column_names(self) -> list[str]:
        if self.degree == 1:
            return [self.name]
        return [self.name] + [f"{self.name}^{k}" for k in range(2, self.degree + 1)]


@dataclass(frozen=True)
class CovariateSpec:
    entries: tuple[CovariateEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate covariate names in {names}")

    @classmethod
    def parse(cls, text: str) -> "CovariateSpec":
        """Parse ``"age:continuous:2, private_seller:binary"``.

        Each comma-separated item is ``name[:kind[:degree]]``; kind defaults to
        continuous and degree to 1.
        """
        entries = []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            parts = [p.strip() for p in item.split(":")]
            name = parts[0]
            kind = parts[1] if len(parts) > 1 else "continuous"
            degree = int(parts[2]) if len(parts) > 2 else 1
            entries.append(CovariateEntry(name, kind, degree))
        return cls(tuple(entries))

    def __str__(self):
        return ", ".join(
            f"{e.name}:{e.kind}" + (f":{e.degree}" if e.degree > 1 else "") for e in self.entries
        )

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def column_names(self) -> list[str]:
        return [c for e in self.entries for c in e.column_names()]

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    names: tuple[str, ...]
    kinds: tuple[str, ...]
    center: np.ndarray
    scale: np.ndarray

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([k == "binary" for k in self.kinds], dtype=bool)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class Panel:
    """Columnar observation container; every array has one entry per listing."""

    ids: np.ndarray
    group: np.ndarray
    period: np.ndarray
    fuel: np.ndarray
    price: np.ndarray
    covariates: Mapping[str, np.ndarray]
    tags: Mapping[str, np.ndarray]
    make: np.ndarray
    duration_days: np.ndarray
    censored: np.ndarray
    meta: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.ids)

    def take(self, index) -> "Panel":
        idx = np.asarray(index)
        return Panel(
            ids=self.ids[idx],
            group=self.group[idx],
            period=self.period[idx],
            fuel=self.fuel[idx],
            price=self.price[idx],
            covariates={k: v[idx] for k, v in self.covariates.items()},
            tags={k: v[idx] for k, v in self.tags.items()},
            make=self.make[idx],
            duration_days=self.duration_days[idx],
            censored=self.censored[idx],
            meta=dict(self.meta),
        )

    def validate(self) -> None:
        n = len(self.ids)
        for name in ("group", "period", "fuel", "price", "make", "duration_days", "censored"):
            if len(getattr(self, name)) != n:
                raise SchemaError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        bad = ~np.isin(self.group, (0, 1))
        if bad.any():
            raise ValidationError(f"record {self.ids[bad][0]}: group must be 0 or 1")
        bad = ~np.isin(self.fuel, (0, 1))
        if bad.any():
            raise ValidationError(f"record {self.ids[bad][0]}: fuel must be 0 or 1")
        bad = (self.period < 0) | (self.period >= N_PERIODS)
        if bad.any():
            raise ValidationError(f"record {self.ids[bad][0]}: period must be in 0..7")
        bad = ~np.isfinite(self.price) | (self.price < 0)
        if bad.any():
            raise ValidationError(f"record {self.ids[bad][0]}: price must be finite and >= 0")
        bad = self.duration_days < 0
        if bad.any():
            raise ValidationError(f"record {self.ids[bad][0]}: duration_days must be >= 0")

    @classmethod
    def from_records(cls, records: Sequence[ObservationRecord]) -> "Panel":
        records = list(records)
        cov_names: list[str] = []
        for r in records:
            for k in r.covariates:
                if k not in cov_names:
                    cov_names.append(k)
        covariates = {}
        for k in cov_names:
            col = np.empty(len(records))
            for i, r in enumerate(records):
                col[i] = r.covariates[k] if k in r.covariates else np.nan
            covariates[k] = col
        return cls(
            ids=np.array([str(r.id) for r in records], dtype=object),
            group=np.array([r.group for r in records], dtype=np.int8),
            period=np.array([r.period for r in records], dtype=np.int8),
            fuel=np.array([r.fuel for r in records], dtype=np.int8),
            price=np.array([r.price for r in records], dtype=float),
            covariates=covariates,
            tags={t: np.array([getattr(r, t) for r in records], dtype=object) for t in TAG_NAMES},
            make=np.array([r.make for r in records], dtype=object),
            duration_days=np.array([r.duration_days for r in records], dtype=np.int64),
            censored=np.array([r.censored for r in records], dtype=bool),
        )

    def to_records(self) -> list[ObservationRecord]:
        out = []
        for i in range(len(self)):
            out.append(
                ObservationRecord(
                    id=str(self.ids[i]),
                    group=int(self.group[i]),
                    period=int(self.period[i]),
                    fuel=int(self.fuel[i]),
                    price=float(self.price[i]),
                    covariates={k: float(v[i]) for k, v in self.covariates.items()},
                    make=str(self.make[i]),
                    duration_days=int(self.duration_days[i]),
                    censored=bool(self.censored[i]),
                    **{t: str(self.tags[t][i]) for t in TAG_NAMES if t in self.tags},
                )
            )
        return out


def as_panel(data) -> Panel:
    if isinstance(data, Panel):
        return data
    return Panel.from_records(list(data))


def apply_covariate_spec(data, spec: CovariateSpec, standardize: bool = True) -> DesignMatrix:
    """Build the covariate design matrix for a run.

    Polynomial entries expand to ``x, x**2, ..., x**k``. With ``standardize``
    every continuous column is centered and divided by its pooled sample
    standard deviation (ddof=1); binary columns are passed through unchanged.
    Constant continuous columns are centered but not scaled.
    """
    panel = as_panel(data)
    n = len(panel)
    cols, names, kinds = [], [], []
    for entry in spec.entries:
        if entry.name not in panel.covariates:
            rec = panel.ids[0] if n else "<none>"
            raise SchemaError(f"record {rec}: missing covariate field {entry.name!r}")
        raw = np.asarray(panel.covariates[entry.name], dtype=float)
        bad = ~np.isfinite(raw)
        if bad.any():
            rec = panel.ids[np.flatnonzero(bad)[0]]
            raise ValidationError(f"record {rec}: covariate {entry.name!r} is not finite")
        if entry.kind == "binary":
            off = ~np.isin(raw, (0.0, 1.0))
            if off.any():
                rec = panel.ids[np.flatnonzero(off)[0]]
                raise ValidationError(f"record {rec}: binary covariate {entry.name!r} not in {{0, 1}}")
        for k, cname in enumerate(entry.column_names(), start=1):
            cols.append(raw**k)
            names.append(cname)
            kinds.append(entry.kind)
    values = np.column_stack(cols) if cols else np.empty((n, 0))
    center = np.zeros(values.shape[1])
    scale = np.ones(values.shape[1])
    if standardize and n > 1:
        for j, kind in enumerate(kinds):
            if kind == "continuous":
                center[j] = values[:, j].mean()
                sd = values[:, j].std(ddof=1)
                scale[j] = sd if sd > 0 else 1.0
        values = (values - center) / scale
    return DesignMatrix(values, tuple(names), tuple(kinds), center, scale)


@dataclass(frozen=True)
class EstimandRequest:
    outcome: str = "diesel_share"
    period: int = 1
    control_definition: str = "all_other_makes"
    subgroup: tuple[str, str] | None = None
    conditional: bool = True

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValidationError(f"unknown outcome {self.outcome!r}; expected one of {OUTCOMES}")
        if not 1 <= self.period < N_PERIODS:
            raise ValidationError(f"post period must be in 1..7, got {self.period}")
        if self.control_definition not in CONTROL_DEFINITIONS:
            raise ValidationError(f"unknown control definition {self.control_definition!r}")
        if self.subgroup is not None:
            tag, _ = self.subgroup
            if tag not in TAG_NAMES:
                raise ValidationError(f"unknown subgroup tag {tag!r}")

    @property
    def label(self) -> str:
        parts = [self.outcome, self.control_definition, "cond" if self.conditional else "uncond"]
        if self.subgroup:
            parts.append(f"{self.subgroup[0]}={self.subgroup[1]}")
        parts.append(f"m{self.period}")
        return "_".join(parts)


CELL_KEYS = ((1, 1), (1, 0), (0, 1), (0, 0))


def sample_mask(panel: Panel, request: EstimandRequest, german_makes: Iterable[str] = GERMAN_MAKES) -> np.ndarray:
    """Records that enter the estimand sample before cell assignment."""
    mask = np.ones(len(panel), dtype=bool)
    if request.outcome == "asking_price":
        mask &= panel.fuel == 1
    if request.control_definition == "non_german_makes":
        mask &= ~((panel.group == 0) & np.isin(panel.make, list(german_makes)))
    if request.subgroup is not None:
        tag, value = request.subgroup
        if tag not in panel.tags:
            raise SchemaError(f"panel has no tag column {tag!r}")
        mask &= panel.tags[tag] == value
    return mask


def partition_cells(
    data, request: EstimandRequest, german_makes: Iterable[str] = GERMAN_MAKES
) -> dict[tuple[int, int], np.ndarray]:
    """Split the filtered sample into the four (group, post) cells.

    Returns row indices into the panel keyed by ``(g, 1)`` for period
    ``request.period`` and ``(g, 0)`` for the pre-disclosure period.
    Records from other periods are ignored.
    """
    panel = as_panel(data)
    mask = sample_mask(panel, request, german_makes)
    cells = {}
    for g, post in CELL_KEYS:
        t = request.period if post else 0
        idx = np.flatnonzero(mask & (panel.group == g) & (panel.period == t))
        if idx.size == 0:
            raise EstimandError(f"empty cell G={g}, T={t} for request {request.label}")
        cells[(g, post)] = idx
    return cells


@dataclass
class EffectEstimate:
    point: float
    se: float = float("nan")
    t_stat: float = float("nan")
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    n_reference: int = 0
    n_comparison: int = 0
    replications: int = 0
    discarded: int = 0

    @property
    def p_value(self) -> float:
        from scipy.stats import norm

        if not math.isfinite(self.t_stat):
            if math.isinf(self.t_stat):
                return 0.0
            return float("nan")
        return float(2 * norm.sf(abs(self.t_stat)))

    @property
    def stars(self) -> str:
        p = self.p_value
        if not math.isfinite(p):
            return ""
        if p < 0.01:
            return "***"
        if p < 0.05:
            return "**"
        if p < 0.10:
            return "*"
        return ""
