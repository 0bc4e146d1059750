# The matching pipeline one step at a time on a small example.
import numpy as np

from cdid.matching import (
    adjusted_mean_details,
    compute_radius,
    nearest_neighbor_distances,
    radius_match,
    trim_support,
)
from cdid.probit import fit_probit, predict_score

rng = np.random.default_rng(3)
x_ref = rng.normal(0.5, 1.0, 40)
x_comp = rng.normal(0.0, 1.0, 60)
y_comp = 2.0 + 1.5 * x_comp + rng.normal(0, 0.3, 60)

model = fit_probit(np.concatenate([x_ref, x_comp]), np.r_[np.ones(40), np.zeros(60)])
print("probit coefficients", model.coefficients.round(4), "iterations", model.iterations)

p_ref, p_comp = predict_score(model, x_ref[:, None]), predict_score(model, x_comp[:, None])
keep = trim_support(p_ref, p_comp)
r = compute_radius(nearest_neighbor_distances(p_ref[keep], p_comp))
m = radius_match(p_ref, p_comp, r, on_support=keep)
print(f"kept {keep.sum()}/40 references, radius {r:.5f}, {m.fallback_count} nearest-neighbour fallbacks")

adj = adjusted_mean_details(m, y_comp, x_comp[:, None], [x_ref[keep].mean()])
print(f"matched mean {adj.raw:.4f} -> bias adjusted {adj.adjusted:.4f}")
print(f"target (outcome model at reference mean) {2.0 + 1.5 * x_ref[keep].mean():.4f}")
