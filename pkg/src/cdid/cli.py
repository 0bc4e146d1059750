"""Command-line front end.

    cdid validate FILE [--covariates SPEC]
    cdid simulate [--config RUN.ini] [--seed N] [--n-agents N] [--shock X] --out FILE
    cdid estimate --config RUN.ini [--output DIR] [--replications N] [--seed N]
    cdid balance  --config RUN.ini [--output DIR]
    cdid survival FILE [--horizon 24] --output DIR

Environment: CDID_WORKERS (bootstrap worker processes), CDID_LOG_LEVEL.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .data import CovariateSpec, Panel
from .errors import CDiDError
from .experiment import ResultBundle, load_run_config, run_experiment, write_survival_curves
from .io import load_observations, write_observations
from .market import MarketSimConfig, simulate_panel

log = logging.getLogger("cdid")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdid", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="schema check of an observation file")
    v.add_argument("file")
    v.add_argument("--covariates", default="", help='required covariates, e.g. "age:continuous:2,private_seller:binary"')
    v.add_argument("--tolerate-invalid", action="store_true")

    s = sub.add_parser("simulate", help="write a synthetic listing panel")
    s.add_argument("--config", help="run file whose [simulate] section sets the model")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-agents", type=int)
    s.add_argument("--shock", type=float)
    s.add_argument("--shock-standards", help="comma-separated emission standards receiving the shock")
    s.add_argument("--out", required=True)

    for name, helptext in (("estimate", "full estimation pipeline"), ("balance", "balance and support diagnostics only")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("--config", required=True)
        e.add_argument("--output")
        if name == "estimate":
            e.add_argument("--replications", type=int)
            e.add_argument("--seed", type=int)

    k = sub.add_parser("survival", help="Kaplan-Meier curves by group, fuel and pre/post period")
    k.add_argument("file")
    k.add_argument("--horizon", type=int, default=24)
    k.add_argument("--output", required=True)
    return p


def _report(bundle: ResultBundle) -> int:
    for w in bundle.warnings:
        log.warning(w)
    for f in bundle.failures:
        log.error(f)
    print(f"wrote {len(bundle.files)} file(s) to {bundle.output_dir}")
    return 0 if bundle.ok else 1


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CDID_LOG_LEVEL", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            spec = CovariateSpec.parse(args.covariates)
            records = load_observations(args.file, spec.names, args.tolerate_invalid)
            Panel.from_records(records).validate()
            print(f"{args.file}: {len(records)} valid record(s)")
            return 0

        if args.command == "simulate":
            cfg = MarketSimConfig()
            if args.config:
                run = load_run_config(args.config)
                if run.simulate is None:
                    raise CDiDError(f"{args.config} has no simulation section enabled")
                cfg = run.simulate
            changes = {}
            if args.seed is not None:
                changes["seed"] = args.seed
            if args.n_agents is not None:
                changes["n_agents"] = args.n_agents
            if args.shock is not None:
                changes["shock"] = args.shock
            if args.shock_standards:
                changes["shock_emission_standards"] = tuple(x.strip() for x in args.shock_standards.split(","))
            cfg = dataclasses.replace(cfg, **changes)
            panel = simulate_panel(cfg)
            write_observations(panel, args.out)
            print(f"wrote {len(panel)} listing(s) to {args.out}")
            return 0

        if args.command in ("estimate", "balance"):
            config = load_run_config(args.config)
            changes = {}
            if args.output:
                changes["output_dir"] = args.output
            if args.command == "estimate":
                boot = config.bootstrap
                if args.replications is not None:
                    boot = dataclasses.replace(boot, replications=args.replications)
                if args.seed is not None:
                    boot = dataclasses.replace(boot, seed=args.seed)
                changes["bootstrap"] = boot
            else:
                changes["survival"] = False
            config = dataclasses.replace(config, **changes)
            return _report(run_experiment(config, diagnostics_only=args.command == "balance"))

        if args.command == "survival":
            panel = Panel.from_records(load_observations(args.file))
            bundle = ResultBundle(Path(args.output))
            bundle.output_dir.mkdir(parents=True, exist_ok=True)
            write_survival_curves(panel, args.horizon, bundle.output_dir, bundle)
            return _report(bundle)
    except CDiDError as exc:
        log.error("%s", exc)
        return 2
    return 2  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
