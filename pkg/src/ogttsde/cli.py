"""Command-line front end.

Exit codes
----------
0  success
1  unexpected internal error
2  configuration, usage or input-format error
3  simulation aborted (Euler ``abort`` policy)
4  fit stopped at the evaluation limit
5  diffusion matrix singular at the initial fit point
6  stationarity check failed
7  martingale check failed
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import io
from .config import ConfigError
from .girsanov import (
    b1_increments,
    log_density_paths,
    martingale_check,
    quadratic_variation,
    shifted_increments,
)
from .infer import A1Error, FitOptions, GBMParameters, fit_mle
from .measure import (
    InsufficientSamplesError,
    analytic_stationary_1d,
    default_burn_in,
    ks_distance,
    long_run_sample,
    relaxation_time,
    stationarity_report,
)
from .model import STATE_NAMES, ModelError, check_monotone_condition, validate_parameters
from .simulate import EnsembleError, PathAbortError, integrate, simulate_ensemble, as_system

(EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_ABORT, EXIT_MAXEVAL, EXIT_A1, EXIT_STATIONARY,
 EXIT_MARTINGALE) = range(8)


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class Run:
    """Collects artifacts of one command and writes the manifest at the end."""

    def __init__(self, command, cfg, out, workers):
        self.command, self.cfg, self.out, self.workers = command, cfg, Path(out), workers
        self.artifacts = []
        self.started = time.perf_counter()

    def path(self, name) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def manifest(self, exit_code, extra=None):
        body = {
            "command": self.command,
            "config": self.cfg.resolved(),
            "parameter_file": self.cfg.source,
            "parameter_hash": "sha256:" + self.cfg.digest,
            "overrides": self.cfg.overrides,
            "seeds": [self.cfg["seed"]],
            "workers": self.workers,
            "artifacts": sorted(self.artifacts),
            "wall_clock_seconds": round(time.perf_counter() - self.started, 6),
            "version": __version__,
            "exit_code": exit_code,
        }
        body.update(extra or {})
        io.write_json(self.out / "manifest.json", body)


def _names(n_dim):
    return list(STATE_NAMES) if n_dim == len(STATE_NAMES) else [f"x{j}" for j in range(n_dim)]


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, run: Run, args) -> int:
    sim = cfg.simulation()
    theta = cfg.system()
    protocol = cfg.protocol() if cfg.model == "ogtt" else None
    try:
        records = simulate_ensemble(sim, theta, protocol, cfg.y0(), workers=run.workers)
    except (EnsembleError, PathAbortError) as err:
        raise CommandError(f"simulation aborted: {err}", EXIT_ABORT) from err
    for rec in records:
        io.write_path(run.path(io.path_filename(rec.path_index)), rec)
    clamps = int(sum(r.clamp_count for r in records))
    io.write_json(run.path("ensemble.json"), {
        "seed": sim.seed, "n_paths": sim.n_paths, "dt": sim.dt, "scheme": sim.scheme,
        "parameter_hash": "sha256:" + cfg.digest,
        "files": [io.path_filename(r.path_index) for r in records],
        "euler_clamp_events": clamps,
        "isr_clamp_events": int(sum(r.isr_clamp_count for r in records)),
    })
    print(f"simulated {sim.n_paths} path(s), {sim.n_steps} steps each -> {run.out}")
    return EXIT_OK


def cmd_fit(cfg, run: Run, args) -> int:
    try:
        obs = io.read_observations(args.observations)
    except (io.ObservationFormatError, ValueError) as err:
        raise CommandError(f"{args.observations}: {err}", EXIT_CONFIG) from err
    free = cfg["fit_free"]
    if not free:
        raise CommandError("fit_free lists no parameters", EXIT_CONFIG)
    if cfg.model == "gbm":
        theta0 = GBMParameters(cfg["gbm_mu"], cfg["gbm_sigma"])
        protocol = None
        names = ["mu", "sigma"]
    elif cfg.model == "ogtt":
        theta0 = cfg.theta()
        protocol = cfg.protocol()
        names = list(theta0.names())
    else:
        raise CommandError("fit supports model = ogtt or gbm", EXIT_CONFIG)
    unknown = [n for n in free if n not in names]
    if unknown:
        raise CommandError(f"unknown free parameter(s): {', '.join(unknown)}", EXIT_CONFIG)
    if obs.states.shape[1] != (5 if cfg.model == "ogtt" else 1):
        raise CommandError("observation columns do not match the model dimension", EXIT_CONFIG)
    options = FitOptions(xatol=cfg["fit_xatol"], max_evaluations=cfg["fit_max_evals"])
    try:
        res = fit_mle(obs, free, theta0, cfg.bounds(), options, protocol)
    except A1Error as err:
        raise CommandError(f"initial point violates positive definiteness: {err}", EXIT_A1) from err
    except ValueError as err:
        raise CommandError(str(err), EXIT_CONFIG) from err
    theta_hat = {n: getattr(res.theta_hat, n) for n in names}
    io.write_json(run.path("fit.json"), {
        "theta_hat": theta_hat,
        "loglik": res.log_likelihood,
        "converged": res.converged,
        "n_eval": res.n_evaluations,
        "free_params": list(res.free_params),
        "bounds": {k: list(v) for k, v in res.bounds.items()},
        "initial_loglik": res.initial_log_likelihood,
        "n_observations": obs.n,
    })
    io.write_csv(run.path("trace.csv"), ("iteration", "best_value"),
                 [(str(i), v) for i, v in res.trace])
    status = "converged" if res.converged else "stopped at the evaluation limit"
    print(f"fit {status}: loglik {res.log_likelihood:.10g} after {res.n_evaluations} evaluations")
    for n in res.free_params:
        print(f"  {n} = {theta_hat[n]:.10g}")
    return EXIT_OK if res.converged else EXIT_MAXEVAL


def cmd_stationary(cfg, run: Run, args) -> int:
    if cfg.model == "gbm":
        raise CommandError("geometric Brownian motion has no stationary law", EXIT_CONFIG)
    t_total = cfg.get("t_total")
    if t_total is None:
        raise CommandError("stationary needs t_total", EXIT_CONFIG)
    dt = cfg.get("stationary_dt", 0.5 if cfg.model == "ogtt" else 0.01)
    analytic = None
    if cfg.model == "ogtt":
        theta = cfg.theta()
        system = None
        burn_in = cfg.get("burn_in", default_burn_in(theta))
        thinning = cfg.get("thinning", relaxation_time(theta))
    else:
        theta = None
        system = cfg.system()
        burn_in, thinning = cfg.get("burn_in"), cfg.get("thinning")
        if burn_in is None or thinning is None:
            raise CommandError("burn_in and thinning are required for linear1d", EXIT_CONFIG)
        analytic = analytic_stationary_1d(cfg["lin_a"], cfg["lin_b"], cfg["lin_alpha"])
    try:
        measure = long_run_sample(theta, cfg.y0(), t_total, burn_in, thinning, cfg["seed"], dt,
                                  cfg["n_chains"], run.workers, cfg["bins"], system, warn=False)
        report = stationarity_report(measure, cfg["ks_threshold"])
    except InsufficientSamplesError as err:
        raise CommandError(f"insufficient samples: {err}", EXIT_CONFIG) from err
    except ValueError as err:
        raise CommandError(str(err), EXIT_CONFIG) from err
    names = _names(measure.samples.shape[1])
    for name, (edges, counts) in zip(names, measure.histogram):
        io.write_csv(run.path(f"histogram_{name}.csv"), ("bin_left", "bin_right", "count"),
                     [(lo, hi, str(int(c))) for lo, hi, c in zip(edges[:-1], edges[1:], counts)])
    io.write_csv(run.path("samples.csv"), names, measure.samples)
    body = report.as_dict(names)
    body.update(n_samples=measure.n, n_chains=measure.n_chains, burn_in=measure.burn_in,
                thinning=measure.thinning, dt=dt)
    passed = report.all_passed
    if analytic is not None:
        ks = ks_distance(measure.samples[:, 0], analytic.cdf)
        body.update(analytic_ks=ks, analytic_threshold=cfg["analytic_ks_threshold"],
                    analytic_shape=analytic.shape, analytic_scale=analytic.scale)
        passed = passed and ks < cfg["analytic_ks_threshold"]
        body["all_passed"] = passed
    io.write_json(run.path("stationarity.json"), body)
    for name in names:
        print(f"{name}: window KS {body['window_ks'][name]:.4f}")
    if analytic is not None:
        print(f"KS against the inverse-gamma law: {body['analytic_ks']:.4f}")
    print("stationarity " + ("passed" if passed else "FAILED"))
    return EXIT_OK if passed else EXIT_STATIONARY


def cmd_girsanov_check(cfg, run: Run, args) -> int:
    if cfg.model != "ogtt":
        raise CommandError("girsanov-check needs model = ogtt", EXIT_CONFIG)
    theta, protocol, y0 = cfg.theta(), cfg.protocol(), cfg.y0()
    if not theta.alpha1 > 0:
        raise CommandError("the measure change needs alpha1 > 0", EXIT_CONFIG)
    sim = cfg.simulation()
    threshold = cfg["novikov_threshold"]
    try:
        summary = martingale_check(theta, protocol, y0, sim, run.workers, threshold)
    except ModelError as err:
        raise CommandError(f"simulation left the positive orthant: {err}", EXIT_ABORT) from err

    n_written = min(max(cfg["girsanov_paths_written"], 0), sim.n_paths)
    qv = []
    if n_written:
        full = integrate(as_system(theta, protocol), y0,
                         cfg.simulation(record_stride=1, n_paths=n_written), workers=run.workers)
        times = sim.t_start + np.arange(sim.n_steps + 1) * sim.dt
        for p in range(n_written):
            dB1 = b1_increments(sim.seed, p, sim.n_steps, sim.dt)
            G = full.states[p, :, 0]
            log_D, _ = log_density_paths(times, G, dB1, theta, protocol, threshold)
            io.write_csv(run.path(f"girsanov_{io.path_filename(p)}"), ("t", "logD"),
                         np.column_stack([times, log_D]))
            qv.append(quadratic_variation(shifted_increments(times, G, dB1, theta, protocol)))
    mean, se = summary["mean_D_T"], summary["se_D_T"]
    passed = mean == 1.0 or abs(mean - 1.0) < 3.0 * se
    summary.update(
        passed=passed,
        horizon=sim.t_end - sim.t_start,
        qv_B1_tilde=qv,
        qv_expected=sim.t_end - sim.t_start,
        paths_written=n_written,
    )
    io.write_json(run.path("girsanov.json"), summary)
    print(f"mean D(T) = {mean:.6f} (SE {se:.6f}, {summary['n_paths']} paths, "
          f"{summary['flagged_steps']} flagged steps): " + ("passed" if passed else "FAILED"))
    return EXIT_OK if passed else EXIT_MARTINGALE


def cmd_validate_config(cfg, run: Run, args) -> int:
    lines = [f"{cfg.source}: model {cfg.model}"]
    y0 = cfg.y0()
    cfg.simulation()
    if cfg.model == "ogtt":
        theta, protocol = cfg.theta(), cfg.protocol()
        try:
            validate_parameters(theta)
        except ModelError as err:
            raise CommandError(str(err), EXIT_CONFIG) from err
        rng = np.random.default_rng(int(cfg["seed"]) % 2**32)
        cloud = y0 * np.exp(rng.uniform(-1.0, 1.0, size=(512, y0.size)))
        K = check_monotone_condition(theta, protocol, cloud, protocol.breakpoints[-1])
        lines.append(f"beta-cell growth shape ok; monotone constant on sampled states {K:.4g}")
    else:
        as_system(cfg.system(), None)
    print("\n".join(lines + ["configuration ok"]))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "stationary": cmd_stationary,
    "girsanov-check": cmd_girsanov_check,
    "validate-config": cmd_validate_config,
}
WRITES_MANIFEST = {"simulate", "fit", "stationary", "girsanov-check"}


def _override(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _global_flags(parser, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), metavar="PATH",
                        help="parameter file (default: the packaged default.params)")
    parser.add_argument("--out", default=d("out"), metavar="DIR", help="output directory")
    parser.add_argument("--seed", default=d(None), metavar="U64", help="override the seed")
    parser.add_argument("--workers", type=int, default=d(1), metavar="N",
                        help="worker threads; outputs do not depend on N")
    parser.add_argument("--set", dest="overrides", action="append", type=_override,
                        default=d([]), metavar="KEY=VALUE", help="override a parameter-file entry")


def build_parser():
    parser = argparse.ArgumentParser(prog="ogttsde", description=__doc__.split("\n")[0],
                                     epilog=__doc__[__doc__.index("Exit codes"):],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate paths and write one CSV per path",
        "fit": "maximum-likelihood fit to an observation CSV",
        "stationary": "long-run sampling of the meal-free system",
        "girsanov-check": "Monte Carlo check that the density process has mean one",
        "validate-config": "load and check a parameter file",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _global_flags(p, suppress=True)
        if name == "fit":
            p.add_argument("observations", help="CSV with header t,G,I,beta,gamma,sigma")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.config:
            cfg = cfgmod.load(args.config, overrides)
        else:
            cfg = cfgmod.load_default(overrides=overrides)
        run = Run(args.command, cfg, args.out, args.workers)
        code = COMMANDS[args.command](cfg, run, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (ModelError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command in WRITES_MANIFEST:
        run.manifest(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
