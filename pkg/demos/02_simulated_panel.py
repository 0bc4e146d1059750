# A synthetic listing panel with a disclosure shock on treated diesel cars.
import numpy as np

from cdid.market import MarketSimConfig, simulate_panel, true_effect

cfg = MarketSimConfig(n_agents=2000, seed=1, shock=0.08, age_group_shift=-0.7, age_drift_treated=1.0)
panel = simulate_panel(cfg)
print(len(panel), "listings; covariates:", sorted(panel.covariates))

for g in (1, 0):
    for t in (0, 1):
        sel = (panel.group == g) & (panel.period == t)
        print(f"G={g} T={t}: n={sel.sum():5d}  diesel share={panel.fuel[sel].mean():.3f}  "
              f"mean age={panel.covariates['age'][sel].mean():.2f}")

# treated cars are younger before and older after: raw comparisons are confounded
print("true matched share effect:  ", round(true_effect(cfg, 1, "diesel_share"), 4))
print("true raw share effect:      ", round(true_effect(cfg, 1, "diesel_share", conditional=False), 4))
print("true matched price effect:  ", round(true_effect(cfg, 1, "asking_price"), 4))
print("true raw price effect:      ", round(true_effect(cfg, 1, "asking_price", conditional=False), 4))
