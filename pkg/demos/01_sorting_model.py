# Sorting model: who lists a used car when its quality drops?
#
# Owners value quality with a taste theta ~ U[1, theta_high]; buyers have
# taste 1 and pay the quality. A lower quality pushes low-taste owners to sell.
import numpy as np

from cdid.market import MarketSimConfig, seller_threshold, supply_share, used_price

cfg = MarketSimConfig(theta_high=2.0, q_new=2.0, p_new=3.0)

for q in (0.6, 0.5, 0.4, 0.3):
    print(f"q={q:.1f}  threshold={seller_threshold(q, cfg):.4f}  "
          f"share listed={supply_share(q, cfg):.4f}  price={used_price(q):.2f}")

# a quality loss of 0.1 from q=0.5 raises the listing rate by 1/24
print("listing-rate change:", supply_share(0.4, cfg) - supply_share(0.5, cfg))

# the closed form agrees with simulated owners
theta = np.random.default_rng(0).uniform(1, cfg.theta_high, 200_000)
print("simulated share at q=0.5:", np.mean(theta > seller_threshold(0.5, cfg)))
