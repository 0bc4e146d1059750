"""Delimited-text input and output.

Observation files are UTF-8 CSV with a header row, one listing per row.
Required columns are ``id, group, period, fuel, price``; the optional columns
``make, emission_standard, vehicle_class, seller_type, duration_days,
censored`` carry tags and durations, and every other column is read as a
numeric covariate.
"""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import (
    EMISSION_STANDARDS,
    SELLER_TYPES,
    TAG_NAMES,
    VEHICLE_CLASSES,
    ObservationRecord,
    Panel,
    as_panel,
)
from .errors import SchemaError, ValidationError

log = logging.getLogger(__name__)

REQUIRED = ("id", "group", "period", "fuel", "price")
OPTIONAL = ("make",) + TAG_NAMES + ("duration_days", "censored")
CATEGORIES = {
    "emission_standard": EMISSION_STANDARDS,
    "vehicle_class": VEHICLE_CLASSES,
    "seller_type": SELLER_TYPES,
}
_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no", ""}


def _parse_int(value: str, name: str) -> int:
    try:
        f = float(value)
    except ValueError:
        raise ValidationError(f"{name}: cannot parse {value!r} as an integer") from None
    if not f.is_integer():
        raise ValidationError(f"{name}: {value!r} is not an integer")
    return int(f)


def _parse_float(value: str, name: str) -> float:
    try:
        f = float(value)
    except ValueError:
        raise ValidationError(f"{name}: cannot parse {value!r} as a number") from None
    if not math.isfinite(f):
        raise ValidationError(f"{name}: value {value!r} is not finite")
    return f


def _parse_bool(value: str, name: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValidationError(f"{name}: cannot parse {value!r} as a boolean")


def _parse_row(row: dict, covariate_cols: Sequence[str]) -> ObservationRecord:
    kwargs = {
        "id": row["id"],
        "group": _parse_int(row["group"], "group"),
        "period": _parse_int(row["period"], "period"),
        "fuel": _parse_int(row["fuel"], "fuel"),
        "price": _parse_float(row["price"], "price"),
        "covariates": {c: _parse_float(row[c], c) for c in covariate_cols},
    }
    for tag in TAG_NAMES:
        value = (row.get(tag) or "").strip()
        if value and value not in CATEGORIES[tag]:
            raise ValidationError(f"{tag}: unknown category {value!r}")
        kwargs[tag] = value
    kwargs["make"] = (row.get("make") or "").strip()
    if row.get("duration_days", "") not in ("", None):
        kwargs["duration_days"] = _parse_int(row["duration_days"], "duration_days")
    if "censored" in row:
        kwargs["censored"] = _parse_bool(row["censored"] or "", "censored")
    return ObservationRecord(**kwargs)


def load_observations(
    path, covariates: Iterable[str] | None = None, tolerate_invalid: bool = False
) -> list[ObservationRecord]:
    """Read and validate an observation file.

    ``covariates`` names columns that must be present. Invalid rows abort the
    load with a :class:`ValidationError` naming their row numbers (the header
    is row 1) unless ``tolerate_invalid`` is set, in which case they are
    logged and skipped.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED if c not in header]
        if covariates is not None:
            missing += [c for c in covariates if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        cov_cols = [c for c in header if c not in REQUIRED and c not in OPTIONAL]
        records, errors = [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(_parse_row(row, cov_cols))
            except (ValidationError, SchemaError) as exc:
                errors.append(f"row {lineno}: {exc}")
            except (TypeError, KeyError):
                errors.append(f"row {lineno}: wrong number of fields")
    if errors:
        if not tolerate_invalid:
            shown = "; ".join(errors[:5])
            more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
            raise ValidationError(f"{path}: {len(errors)} invalid row(s): {shown}{more}")
        for e in errors:
            log.warning("%s: skipped %s", path, e)
    return records


def load_panel(path, covariates=None, tolerate_invalid=False) -> Panel:
    return Panel.from_records(load_observations(path, covariates, tolerate_invalid))


def write_observations(data, path) -> Path:
    panel = as_panel(data)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cov_names = list(panel.covariates)
    header = list(REQUIRED) + list(OPTIONAL) + cov_names
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(panel)):
            w.writerow(
                [
                    panel.ids[i],
                    int(panel.group[i]),
                    int(panel.period[i]),
                    int(panel.fuel[i]),
                    repr(float(panel.price[i])),
                    panel.make[i],
                    *(panel.tags[t][i] if t in panel.tags else "" for t in TAG_NAMES),
                    int(panel.duration_days[i]),
                    int(bool(panel.censored[i])),
                    *(repr(float(panel.covariates[c][i])) for c in cov_names),
                ]
            )
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_dicts(path, rows: Sequence[dict]) -> Path:
    header = list(rows[0]) if rows else []
    return write_rows(path, header, [[r[h] for h in header] for r in rows])


def write_effects_table(table, path) -> Path:
    """Months as columns, one point row (with stars) and one SE row per subgroup."""
    grid = table.formatted()
    return write_rows(path, grid[0], grid[1:])


def write_balance_table(rows, path) -> Path:
    return write_dicts(path, [r.as_dict() for r in rows])


def write_histogram(hist, path) -> Path:
    lo, hi = hist.edges[:-1], hist.edges[1:]
    rows = [(a, b, int(r), int(c), hist.threshold) for a, b, r, c in zip(lo, hi, hist.ref_counts, hist.comp_counts)]
    return write_rows(path, ["bin_low", "bin_high", "reference", "comparison", "trim_threshold"], rows)


def write_survival(curve, path) -> Path:
    rows = zip(curve.times.tolist(), curve.survival.tolist(), curve.at_risk.tolist(), curve.events.tolist())
    return write_rows(path, ["day", "survival", "at_risk", "events"], rows)


def write_probit_table(model, names, effects, path) -> Path:
    """Coefficient, standard error and average marginal effect per covariate."""
    se = model.standard_errors
    rows = [("intercept", model.coefficients[0], se[0], "")]
    for j, name in enumerate(names):
        rows.append((name, model.coefficients[j + 1], se[j + 1], effects[j] if j < len(effects) else ""))
    return write_rows(path, ["covariate", "coefficient", "std_error", "marginal_effect"], rows)


def write_match_audit(match, path) -> Path:
    rows = zip(match.ref_index.tolist(), match.comp_index.tolist(), match.weight.tolist())
    return write_rows(path, ["reference", "comparison", "weight"], rows)
