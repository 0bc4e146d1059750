"""Run configuration and batch orchestration."""
from __future__ import annotations

import configparser
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import platform
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import (
    CONTROL_DEFINITIONS,
    GERMAN_MAKES,
    OUTCOMES,
    TAG_NAMES,
    CovariateSpec,
    EstimandRequest,
    Panel,
    apply_covariate_spec,
    partition_cells,
)
from .diagnostics import balance_table, kaplan_meier, support_histogram
from .effects import (
    COMPARISONS,
    REFERENCE,
    BootstrapConfig,
    EffectsTable,
    MatchingConfig,
    conditional_means,
    prepare_cells,
    subgroup_effects,
)
from .errors import CDiDError, ConfigError, RankWarning
from .io import (
    load_panel,
    write_balance_table,
    write_effects_table,
    write_histogram,
    write_match_audit,
    write_probit_table,
    write_rows,
    write_survival,
)
from .market import MarketSimConfig, simulate_panel
from .probit import marginal_effects

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    input_path: str | None = None
    simulate: MarketSimConfig | None = None
    covariates: CovariateSpec = CovariateSpec()
    outcomes: tuple[str, ...] = OUTCOMES
    months: tuple[int, ...] = tuple(range(1, 8))
    controls: tuple[str, ...] = ("all_other_makes",)
    subgroups: tuple[str | None, ...] = (None,)
    modes: tuple[bool, ...] = (False, True)  # conditional flags
    german_makes: tuple[str, ...] = GERMAN_MAKES
    matching: MatchingConfig = MatchingConfig()
    bootstrap: BootstrapConfig = BootstrapConfig()
    output_dir: str = "results"
    survival: bool = True
    horizon: int = 24
    histogram_bins: int = 20
    tolerate_invalid: bool = False

    def __post_init__(self):
        if (self.input_path is None) == (self.simulate is None):
            raise ConfigError("exactly one data source (input path or simulation) is required")
        if any(not 1 <= m <= 7 for m in self.months):
            raise ConfigError("months must lie in 1..7")
        for o in self.outcomes:
            if o not in OUTCOMES:
                raise ConfigError(f"unknown outcome {o!r}")
        for c in self.controls:
            if c not in CONTROL_DEFINITIONS:
                raise ConfigError(f"unknown control definition {c!r}")
        for s in self.subgroups:
            if s is not None and s not in TAG_NAMES:
                raise ConfigError(f"unknown subgroup tag {s!r}")

    def to_dict(self) -> dict:
        def conv(v):
            if dataclasses.is_dataclass(v):
                return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, dict):
                return {str(k): conv(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            if isinstance(v, CovariateSpec):
                return str(v)
            return v

        d = conv(self)
        d["covariates"] = str(self.covariates)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _coerce(text: str, default):
    if isinstance(default, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple) or default is None:
        items = _split(text)
        if text.strip().lower() in ("none", ""):
            return None
        try:
            return tuple(float(x) for x in items)
        except ValueError:
            return tuple(items)
    return text


def _months(text: str) -> tuple[int, ...]:
    out = []
    for item in _split(text):
        if "-" in item:
            a, b = item.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(item))
    return tuple(out)


def _section_dataclass(cls, section):
    defaults = {f.name: f.default for f in dataclasses.fields(cls) if f.default is not dataclasses.MISSING}
    kwargs = {}
    for key, value in section.items():
        if key not in defaults:
            raise ConfigError(f"unknown option {key!r} for {cls.__name__}")
        v = _coerce(value, defaults[key])
        if key == "shock_periods" and v is not None:
            v = tuple(int(x) for x in v)
        elif key == "workers":
            v = None if value.strip().lower() in ("", "none") else int(value)
        kwargs[key] = v
    return cls(**kwargs)


def load_run_config(path) -> RunConfig:
    """Read an INI-style run file.

    Sections: ``data`` (``input`` or ``simulate = true``), ``simulate``
    (model parameters), ``covariates`` (``spec``), ``estimands``,
    ``matching``, ``bootstrap``, ``output``, ``survival``, ``diagnostics``.
    Relative input paths resolve against the config file's directory.
    """
    path = Path(path)
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config {path}")
    kw: dict = {}
    data = cp["data"] if cp.has_section("data") else {}
    if data.get("input"):
        p = Path(data["input"])
        kw["input_path"] = str(p if p.is_absolute() else path.parent / p)
    if str(data.get("simulate", "false")).lower() in ("1", "true", "yes"):
        kw["simulate"] = _section_dataclass(MarketSimConfig, cp["simulate"] if cp.has_section("simulate") else {})
    kw["tolerate_invalid"] = str(data.get("tolerate_invalid", "false")).lower() in ("1", "true", "yes")
    if cp.has_section("covariates"):
        kw["covariates"] = CovariateSpec.parse(cp["covariates"].get("spec", ""))
    if cp.has_section("estimands"):
        e = cp["estimands"]
        if "outcomes" in e:
            kw["outcomes"] = tuple(_split(e["outcomes"]))
        if "months" in e:
            kw["months"] = _months(e["months"])
        if "controls" in e:
            kw["controls"] = tuple(_split(e["controls"]))
        if "subgroups" in e:
            kw["subgroups"] = tuple(None if s == "none" else s for s in _split(e["subgroups"]))
        if "modes" in e:
            modes = _split(e["modes"])
            bad = set(modes) - {"conditional", "unconditional"}
            if bad:
                raise ConfigError(f"unknown modes {sorted(bad)}")
            kw["modes"] = tuple(m == "conditional" for m in modes)
        if "german_makes" in e:
            kw["german_makes"] = tuple(_split(e["german_makes"]))
    if cp.has_section("matching"):
        kw["matching"] = _section_dataclass(MatchingConfig, cp["matching"])
    if cp.has_section("bootstrap"):
        kw["bootstrap"] = _section_dataclass(BootstrapConfig, cp["bootstrap"])
    if cp.has_section("output"):
        d = Path(cp["output"].get("dir", "results"))
        kw["output_dir"] = str(d if d.is_absolute() else path.parent / d)
    if cp.has_section("survival"):
        s = cp["survival"]
        kw["survival"] = s.getboolean("enabled", True)
        kw["horizon"] = s.getint("horizon", 24)
    if cp.has_section("diagnostics"):
        kw["histogram_bins"] = cp["diagnostics"].getint("histogram_bins", 20)
    try:
        return RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class ResultBundle:
    output_dir: Path
    tables: dict[str, EffectsTable] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def load_data(config: RunConfig) -> Panel:
    if config.simulate is not None:
        return simulate_panel(config.simulate)
    panel = load_panel(config.input_path, config.covariates.names, config.tolerate_invalid)
    panel.validate()
    return panel


def _table_name(outcome, control, conditional, subgroup):
    return f"effects_{outcome}_{control}_{'matched' if conditional else 'raw'}_{subgroup or 'all'}"


def _raw_covariates(panel, spec, idx):
    return {e.name: panel.covariates[e.name][idx] for e in spec.entries}


def write_diagnostics(panel: Panel, config: RunConfig, request: EstimandRequest, out: Path, bundle: ResultBundle):
    """Balance before/after matching, support histograms and probit tables for one matched request."""
    spec = config.covariates
    binary = {e.name: e.kind == "binary" for e in spec.entries}
    design = apply_covariate_spec(panel, spec)
    idx = partition_cells(panel, request, config.german_makes)
    cells = prepare_cells(panel, request, spec, config.german_makes, design)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankWarning)
        _, details = conditional_means(cells, config.matching)
    ref_raw = _raw_covariates(panel, spec, idx[REFERENCE])
    stem = f"{request.outcome}_{request.control_definition}_m{request.period}"
    for key in COMPARISONS:
        tag = f"{stem}_cell{key[0]}{key[1]}"
        comp_raw = _raw_covariates(panel, spec, idx[key])
        bundle.files.append(write_balance_table(balance_table(ref_raw, comp_raw, binary=binary),
                                                out / "balance" / f"before_{tag}.csv"))
        det = details[key]
        if det.match is None:
            continue
        support = det.match.on_support
        ref_on = {k: v[support] for k, v in ref_raw.items()}
        after = balance_table(ref_on, comp_raw, weights=det.match.aggregate_weights(), binary=binary)
        bundle.files.append(write_balance_table(after, out / "balance" / f"after_{tag}.csv"))
        hist = support_histogram(det.ref_scores[support], det.comp_scores, config.histogram_bins)
        bundle.files.append(write_histogram(hist, out / "support" / f"{tag}.csv"))
        me = marginal_effects(det.model, np.vstack([cells[REFERENCE].X, cells[key].X]), design.binary_mask)
        bundle.files.append(write_probit_table(det.model, design.names, me, out / "probit" / f"{tag}.csv"))
        bundle.files.append(write_match_audit(det.match, out / "matches" / f"{tag}.csv"))
        if det.match.dropped_count:
            bundle.warnings.append(f"{tag}: {det.match.dropped_count} reference(s) off support")


def run_experiment(config: RunConfig, diagnostics_only: bool = False) -> ResultBundle:
    """Estimate every configured effects table and write the result bundle.

    Each (outcome, control, mode, subgroup) table is independent: an error in
    one is recorded in ``bundle.failures`` and the remaining tables proceed.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ResultBundle(out)
    panel = load_data(config)
    log.info("loaded %d listings", len(panel))
    long_rows = []
    for outcome in config.outcomes:
        for control in config.controls:
            for conditional in config.modes:
                for sub in config.subgroups:
                    name = _table_name(outcome, control, conditional, sub)
                    base = EstimandRequest(outcome, 1, control, None, conditional)
                    if diagnostics_only:
                        if conditional and sub is None:
                            for m in config.months:
                                req = dataclasses.replace(base, period=m)
                                try:
                                    write_diagnostics(panel, config, req, out, bundle)
                                except CDiDError as exc:
                                    bundle.failures.append(f"diagnostics {req.label}: {exc}")
                        continue
                    try:
                        with warnings.catch_warnings():
                            warnings.simplefilter("ignore", RankWarning)
                            table = subgroup_effects(panel, base, sub, config.covariates, config.matching,
                                                     config.bootstrap, config.months,
                                                     german_makes=config.german_makes)
                    except CDiDError as exc:
                        bundle.failures.append(f"{name}: {exc}")
                        continue
                    bundle.tables[name] = table
                    bundle.files.append(write_effects_table(table, out / f"{name}.csv"))
                    for note in table.notes:
                        (bundle.warnings if sub else bundle.failures).append(f"{name}: {note}")
                    for label, row in table.rows.items():
                        for m, est in row.items():
                            if est is not None:
                                long_rows.append([outcome, control, int(conditional), sub or "", label, m,
                                                  est.point, est.se, est.t_stat, est.ci_low, est.ci_high,
                                                  est.n_reference, est.n_comparison, est.replications,
                                                  est.discarded])
                    if conditional and sub is None:
                        for m in config.months:
                            req = dataclasses.replace(base, period=m)
                            try:
                                write_diagnostics(panel, config, req, out, bundle)
                            except CDiDError as exc:
                                bundle.warnings.append(f"diagnostics {req.label}: {exc}")
    if long_rows:
        bundle.files.append(write_rows(
            out / "effects_long.csv",
            ["outcome", "control", "conditional", "subgroup", "row", "month", "point", "se", "t_stat",
             "ci_low", "ci_high", "n_reference", "n_comparison", "replications", "discarded"],
            long_rows,
        ))
    if config.survival:
        write_survival_curves(panel, config.horizon, out, bundle)
    bundle.manifest = write_manifest(config, bundle)
    return bundle


def write_survival_curves(panel: Panel, horizon: int, out: Path, bundle: ResultBundle):
    for g in (0, 1):
        for f in (0, 1):
            for label, sel in (("pre", panel.period == 0), ("post", panel.period > 0)):
                mask = sel & (panel.group == g) & (panel.fuel == f)
                if not mask.any():
                    bundle.warnings.append(f"survival G={g} F={f} {label}: no listings")
                    continue
                curve = kaplan_meier(panel.duration_days[mask], panel.censored[mask], horizon)
                bundle.files.append(write_survival(curve, out / "survival" / f"km_g{g}_f{f}_{label}.csv"))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(config: RunConfig, bundle: ResultBundle) -> dict:
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "seed": config.bootstrap.seed,
        "simulation_seed": config.simulate.seed if config.simulate else None,
        "versions": {
            "cdid": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "files": {str(p.relative_to(bundle.output_dir)): _sha256(p) for p in bundle.files},
        "failures": bundle.failures,
        "warnings": bundle.warnings,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    (bundle.output_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
