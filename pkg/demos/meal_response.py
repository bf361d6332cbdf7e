"""Glucose and insulin through the default meal, as ensemble quantiles.

Run: python demos/meal_response.py
"""
import numpy as np

from ogttsde import config, simulate_ensemble

cfg = config.load_default(overrides={"n_paths": "2000", "record_stride": "100"})
records = simulate_ensemble(cfg.simulation(), cfg.theta(), cfg.protocol(), cfg.y0(), workers=4)
G = np.stack([r.states[:, 0] for r in records])
I = np.stack([r.states[:, 1] for r in records])

print(f"{len(records)} log-Euler paths, dt = {cfg['dt']} min")
print(" t (min)   G 5% / 50% / 95% (mg/dl)     I 5% / 50% / 95% (uU/ml)")
for k, t in enumerate(records[0].times):
    g = np.percentile(G[:, k], [5, 50, 95])
    i = np.percentile(I[:, k], [5, 50, 95])
    print(f"{t:7.0f}   {g[0]:6.1f} {g[1]:6.1f} {g[2]:6.1f}        {i[0]:6.1f} {i[1]:6.1f} {i[2]:6.1f}")
