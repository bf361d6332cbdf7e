"""Recover the five noise intensities from one simulated test.

A single path is observed every 0.05 min over the meal window; the other
parameters are held at their true values.

Run: python demos/noise_fit.py
"""
from ogttsde import Observations, config, fit_mle, simulate_path

cfg = config.load_default()
theta, protocol = cfg.theta(), cfg.protocol()
free = cfg["fit_free"]

sim = cfg.simulation(dt=0.05, t_end=0.05 * 4999, scheme="euler")
obs = Observations.from_path(simulate_path(sim, theta, protocol, cfg.y0()))
start = theta.replace(**{n: 2 * getattr(theta, n) for n in free})
res = fit_mle(obs, free, start, protocol=protocol)

print(f"{obs.n} observations, {res.n_evaluations} likelihood evaluations, converged {res.converged}")
print("name     true    start   fitted")
for n in res.free_params:
    print(f"{n:7s} {getattr(theta, n):6.3f}  {getattr(start, n):6.3f}  {getattr(res.theta_hat, n):7.4f}")
