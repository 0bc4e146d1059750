"""Conditional difference-in-differences with propensity-score radius matching.

The package estimates supply and price effects of a quality shock on a
used-car listing market: probit propensity scores, radius matching with
regression bias adjustment, stratified bootstrap inference, balance and
survival diagnostics, and a simulator of the underlying sorting model.
"""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CovariateEntry,
    CovariateSpec,
    EffectEstimate,
    EstimandRequest,
    ObservationRecord,
    Panel,
    apply_covariate_spec,
    partition_cells,
)
from .diagnostics import balance_table, kaplan_meier, standardized_difference, support_histogram  # noqa: E402
from .effects import (  # noqa: E402
    BootstrapConfig,
    MatchingConfig,
    bootstrap_inference,
    conditional_effect,
    estimate_effect,
    subgroup_effects,
    unconditional_effect,
)
from .market import (  # noqa: E402
    MarketSimConfig,
    seller_threshold,
    simulate_panel,
    supply_share,
    trade_utility,
    true_effect,
    used_price,
)
from .matching import bias_adjusted_mean, compute_radius, radius_match, trim_support  # noqa: E402
from .probit import fit_probit, marginal_effects, predict_score  # noqa: E402
