# Raw vs matched difference in differences on a confounded panel, with bootstrap SEs.
import warnings

from cdid.data import CovariateSpec, EstimandRequest
from cdid.effects import BootstrapConfig, estimate_effect
from cdid.errors import RankWarning
from cdid.market import MarketSimConfig, simulate_panel, true_effect

warnings.simplefilter("ignore", RankWarning)

cfg = MarketSimConfig(n_agents=3000, seed=7, shock=0.1, price_scale=1.0,
                      age_group_shift=-0.7, age_drift_treated=1.0, base_quality=(0.9, 0.75))
panel = simulate_panel(cfg)
spec = CovariateSpec.parse("age:continuous:2, mileage, private_seller:binary")
boot = BootstrapConfig(replications=99, seed=0)

for outcome in ("diesel_share", "asking_price"):
    raw = estimate_effect(panel, EstimandRequest(outcome, 1, conditional=False), bootstrap=boot)
    matched = estimate_effect(panel, EstimandRequest(outcome, 1), spec, bootstrap=boot)
    print(outcome)
    print(f"  raw     {raw.point:+.4f} ({raw.se:.4f}){raw.stars:3s} truth {true_effect(cfg, 1, outcome, False):+.4f}")
    print(f"  matched {matched.point:+.4f} ({matched.se:.4f}){matched.stars:3s} truth {true_effect(cfg, 1, outcome):+.4f}")
