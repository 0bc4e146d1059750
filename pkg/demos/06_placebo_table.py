# Effects by emission standard when only one stratum is shocked.
import warnings

from cdid.data import CovariateSpec, EstimandRequest
from cdid.effects import BootstrapConfig, subgroup_effects
from cdid.errors import RankWarning
from cdid.market import MarketSimConfig, simulate_panel

warnings.simplefilter("ignore", RankWarning)

cfg = MarketSimConfig(n_agents=4000, seed=11, shock=0.4, shock_emission_standards=("euro5",))
panel = simulate_panel(cfg)
table = subgroup_effects(panel, EstimandRequest("diesel_share", 1), "emission_standard",
                         CovariateSpec.parse("age:continuous:2, mileage, private_seller:binary"),
                         bootstrap=BootstrapConfig(replications=49, seed=0), months=(1, 2, 3))
for row in table.formatted():
    print("".join(f"{c:>14s}" for c in row))
