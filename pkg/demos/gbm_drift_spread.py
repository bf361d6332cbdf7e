"""How well can 100 time units of GBM pin down the drift?

The volatility is estimated from the quadratic variation and sharpens as dt
shrinks. The drift only sees the endpoint, so its standard error is
sigma / sqrt(T) whatever dt is. With mu = 0.1, sigma = 0.2 and T = 100 that is
0.02, a fifth of mu.

Run: python demos/gbm_drift_spread.py
"""
import numpy as np

from ogttsde import GBMParameters, Observations, fit_mle, simulate_path
from ogttsde.simulate import LinearSDE, SimulationConfig

mu, sigma, dt, n = 0.1, 0.2, 0.01, 10_000
T = n * dt
fits = []
for seed in range(200):
    cfg = SimulationConfig(0.0, T, dt, "euler", seed=seed)
    obs = Observations.from_path(simulate_path(cfg, LinearSDE(0.0, mu, sigma), None, np.array([1.0])))
    th = fit_mle(obs, ["mu", "sigma"], GBMParameters(mu, sigma)).theta_hat
    fits.append((th.mu, th.sigma))
fits = np.array(fits)
within = np.abs(fits / [mu, sigma] - 1) < 0.1

print(f"{len(fits)} seeds, n = {n}, dt = {dt}")
print(f"mu_hat    mean {fits[:, 0].mean():.4f}  sd {fits[:, 0].std():.4f}  (theory {sigma / np.sqrt(T):.4f})"
      f"  within 10%: {within[:, 0].mean():.0%}")
print(f"sigma_hat mean {fits[:, 1].mean():.4f}  sd {fits[:, 1].std():.5f}"
      f"  within 10%: {within[:, 1].mean():.0%}")
