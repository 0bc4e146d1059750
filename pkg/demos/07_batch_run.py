# The batch pipeline that backs the command-line tool, driven from Python.
import tempfile
import textwrap
from pathlib import Path

from cdid.experiment import load_run_config, run_experiment

work = Path(tempfile.mkdtemp())
(work / "run.ini").write_text(textwrap.dedent("""
    [data]
    simulate = true

    [simulate]
    n_agents = 800
    seed = 4
    shock = 0.1

    [covariates]
    spec = age:continuous:2, mileage, private_seller:binary

    [estimands]
    outcomes = diesel_share
    months = 1-3
    controls = all_other_makes, non_german_makes

    [bootstrap]
    replications = 19

    [output]
    dir = results
    """))

bundle = run_experiment(load_run_config(work / "run.ini"))
print("ok:", bundle.ok, "| files:", len(bundle.files), "| output:", bundle.output_dir)
print((bundle.output_dir / "effects_diesel_share_non_german_makes_matched_all.csv").read_text())
