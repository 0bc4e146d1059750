# Balance before and after matching, score overlap, and listing survival.
import warnings

import numpy as np

from cdid.data import CovariateSpec, EstimandRequest, partition_cells
from cdid.diagnostics import balance_table, kaplan_meier, standardized_difference_from_moments, support_histogram
from cdid.effects import conditional_means, prepare_cells
from cdid.errors import RankWarning
from cdid.market import MarketSimConfig, simulate_panel

warnings.simplefilter("ignore", RankWarning)

# two rows of a published balance table, from rounded means and sds
print("car age SD:", round(standardized_difference_from_moments(3.08, 3.09**2, 3.76, 3.31**2), 2))
print("mileage SD:", round(standardized_difference_from_moments(61.3, 52.4**2, 66.6, 51.5**2), 2))

panel = simulate_panel(MarketSimConfig(n_agents=1500, seed=2, age_group_shift=-0.7, age_drift_treated=1.0))
spec = CovariateSpec.parse("age:continuous:2, mileage, private_seller:binary")
req = EstimandRequest("diesel_share", 1)
idx = partition_cells(panel, req)
_, details = conditional_means(prepare_cells(panel, req, spec))

det = details[(0, 1)]
raw = lambda cell: {k: panel.covariates[k][idx[cell]] for k in ("age", "mileage")}
ref = {k: v[det.match.on_support] for k, v in raw((1, 0)).items()}
before = balance_table(raw((1, 0)), raw((0, 1)))
after = balance_table(ref, raw((0, 1)), weights=det.match.aggregate_weights())
for b, a in zip(before, after):
    print(f"{b.covariate:8s} SD before {b.std_diff:6.2f}  after {a.std_diff:5.2f}")

h = support_histogram(det.ref_scores, det.comp_scores, bins=10)
print("reference counts ", h.ref_counts)
print("comparison counts", h.comp_counts, "threshold", round(h.threshold, 3))

sel = (panel.group == 1) & (panel.fuel == 1) & (panel.period == 0)
curve = kaplan_meier(panel.duration_days[sel], panel.censored[sel], horizon=24)
print("share still online after 7, 14, 24 days:", np.round(curve.survival[[7, 14, 24]], 3))
