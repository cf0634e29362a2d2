"""Command-line front end.

Subcommands: ensemble-gen, fit, predict, active-learn, verify-bound and
bench-branin. Outputs are deterministic text files; rerunning a command with
the same inputs reproduces them byte for byte.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import io
from .active import Learner, active_learn, predict_grid
from .bench import BenchmarkConfig, run_benchmark
from .bounds import constraint_data, make_operator, theorem1_bound, theorem2_bound
from .branin import GENERATOR, generate_ensemble
from .grid import Field, Grid, ObservationSet, OffGridError
from .kriging import build_model, fit_hyperparameters

log = logging.getLogger("cophik")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

THREADS_ENV = "COPHIK_THREADS"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise io.ConfigError(f"{THREADS_ENV} must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise io.ConfigError(f"{THREADS_ENV} must be non-negative")
    return n or (os.cpu_count() or 1)


def load_config(args) -> io.RunConfig:
    cfg = io.RunConfig.load(args.config) if args.config else io.RunConfig()
    overrides = {}
    for key in ("seed", "learner", "grid", "n_max", "members"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        merged = cfg.as_dict()
        merged.update(overrides)
        cfg = io.RunConfig.from_mapping(merged)
    return cfg


def make_learner(cfg: io.RunConfig, kind: str, ens) -> Learner:
    if kind == "kriging" and ens is not None:
        raise io.ConfigError("the kriging learner does not take an ensemble; drop --ensemble")
    if kind != "kriging" and ens is None:
        raise io.ConfigError(f"the {kind} learner needs --ensemble")
    return Learner(kind, ens, cfg.optimizer_config(), cfg.rho_config(), cfg.nugget_policy(), thread_count())


def resolve_grid(args, cfg: io.RunConfig, ens) -> Grid:
    if ens is None:
        return cfg.grid_obj()
    if args.grid is not None and Grid.parse(args.grid) != ens.grid:
        raise io.ConfigError("--grid differs from the ensemble grid")
    return ens.grid


def snap(grid: Grid, points, what: str = "observation") -> np.ndarray:
    """Nearest-node indices, logging every nonzero snap distance."""
    idx, dist = grid.nearest(points)
    tol = 1e-9 * float(np.min(grid.spacing))
    for k in np.flatnonzero(dist > tol):
        log.warning(
            "%s %d at %s snapped to node %d, distance %.6g",
            what, k, tuple(float(c) for c in np.atleast_2d(points)[k]), idx[k], dist[k],
        )
    return idx


def obs_nodes(grid: Grid, obs: ObservationSet, kind: str) -> np.ndarray:
    obs.check_inside(grid)
    if kind == "kriging":
        return grid.locate(obs.locations)
    idx = snap(grid, obs.locations)
    if np.unique(idx).size != idx.size:
        raise io.ConfigError("two observations snap to the same grid node")
    return idx


def read_ensemble_arg(args):
    if not args.ensemble:
        return None
    ens, _ = io.read_ensemble(args.ensemble)
    return ens


def fit_from_args(args):
    cfg = load_config(args)
    ens = read_ensemble_arg(args)
    learner = make_learner(cfg, cfg.learner, ens)
    grid = resolve_grid(args, cfg, ens)
    obs = io.read_observations(args.obs)
    obs.check_inside(grid)
    if cfg.learner == "kriging" and len(obs) == 1:
        # lengths are not identifiable from one point; the mean is the datum either way
        model = build_model(obs, grid.extent, cfg.nugget_policy())
    elif cfg.learner == "kriging":
        # Kriging works at arbitrary locations, no snapping needed
        model = fit_hyperparameters(obs, cfg.optimizer_config(), cfg.nugget_policy(), extent=grid.extent)
    else:
        model = learner.fit(grid, obs_nodes(grid, obs, cfg.learner), obs.values)
    return cfg, grid, obs, model


def model_summary(kind: str, model) -> dict:
    out = {"learner": kind}
    if kind == "kriging":
        out.update(
            mu_hat=model.mu_hat, sigma2_hat=model.sigma2_hat,
            lengths=" ".join(repr(v) for v in model.lengths),
            nugget=model.nugget, log_likelihood=model.log_likelihood,
        )
    elif kind == "cophik":
        out.update(
            rho=model.rho, y_l_source=model.y_l_source, mu_d=model.mu_d, sigma2_d=model.sigma2_d,
            lengths=" ".join(repr(v) for v in model.discrepancy.lengths),
            nugget_low=model.nugget[0], nugget_discrepancy=model.nugget[1],
        )
    else:
        out.update(delta_mu=model.delta_mu, nugget=model.nugget)
    return out


def write_posterior(out, grid: Grid, mean, variance, prefix: str = "") -> None:
    io.write_field(out / f"{prefix}mean.fld", Field(grid, mean))
    io.write_field(out / f"{prefix}rmse.fld", Field(grid, np.sqrt(np.maximum(variance, 0.0))))


# -- subcommands --------------------------------------------------------------


def cmd_ensemble_gen(args) -> int:
    cfg = load_config(args)
    grid = cfg.grid_obj()
    if grid.dim != 2:
        raise io.ConfigError("the Branin ensemble generator needs a 2-D grid")
    ens = generate_ensemble(grid, cfg.members, cfg.seed)
    io.write_ensemble(io.ensure_dir(args.out), ens, GENERATOR, cfg.seed)
    log.info("wrote %d members to %s", len(ens), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg, grid, _, model = fit_from_args(args)
    out = io.ensure_dir(args.out)
    post = predict_grid(model, grid)
    write_posterior(out, grid, post.mean, post.variance)
    io.write_kv(out / "model.txt", model_summary(cfg.learner, model))
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg, grid, obs, model = fit_from_args(args)
    pts = io.read_points(args.points)
    if cfg.learner == "kriging":
        post = model.predict(pts)
    else:
        grid_pts = np.atleast_2d(pts)
        if not np.all(grid.contains(grid_pts)):
            raise io.ConfigError("prediction points must lie inside the grid box")
        post = model.predict_nodes(snap(grid, grid_pts, "prediction point"))
    out = io.ensure_dir(args.out)
    names = io.coordinate_names(grid.dim)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["mean", "rmse"])
        for x, m, v in zip(pts, post.mean, post.variance):
            w.writerow([repr(float(c)) for c in x] + [repr(float(m)), repr(float(np.sqrt(max(v, 0.0))))])
    return EXIT_OK


def cmd_active_learn(args) -> int:
    cfg = load_config(args)
    ens = read_ensemble_arg(args)
    learner = make_learner(cfg, cfg.learner, ens)
    grid = resolve_grid(args, cfg, ens)
    oracle = io.read_field(args.oracle)
    if oracle.grid != grid:
        raise io.ConfigError("the oracle field grid differs from the learning grid")
    obs = io.read_observations(args.obs)
    nodes = obs_nodes(grid, obs, cfg.learner)
    known = dict(zip(nodes.tolist(), obs.values.tolist()))

    def query(node):
        return known[node] if node in known else float(oracle.values[node])

    traj = active_learn(learner, query, grid, nodes, cfg.n_max, reference=oracle)
    out = io.ensure_dir(args.out)
    names = io.coordinate_names(grid.dim)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "node"] + names + ["value", "max_mse", "rel_error"])
        for k, s in enumerate(traj.steps, start=1):
            w.writerow(
                [k, s.node] + [repr(float(c)) for c in s.location]
                + [repr(float(s.value)), repr(s.max_mse), repr(s.rel_error)]
            )
    write_posterior(out, grid, traj.mean, traj.variance)
    curve = traj.error_curve()
    io.write_kv(out / "summary.txt", {
        "learner": cfg.learner,
        "n_init": len(nodes),
        "n_final": curve[-1][0],
        "initial_error": traj.initial_error,
        "final_error": curve[-1][1],
        "failure": traj.failure or "none",
    })
    if traj.failure:
        log.error("active learning stopped early: %s", traj.failure)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify_bound(args) -> int:
    cfg = load_config(args)
    if cfg.learner == "kriging":
        raise io.ConfigError("bounds are defined for the ensemble learners only")
    ens = read_ensemble_arg(args)
    learner = make_learner(cfg, cfg.learner, ens)
    grid = resolve_grid(args, cfg, ens)
    obs = io.read_observations(args.obs)
    model = learner.fit(grid, obs_nodes(grid, obs, cfg.learner), obs.values)
    op = make_operator(grid, args.operator or cfg.operator)
    cdata = constraint_data(op, ens, epsilon=cfg.epsilon_value())
    if cfg.learner == "cophik":
        report = theorem2_bound(ens, model, op, cdata)
    else:
        report = theorem1_bound(ens, model, op, cdata)
    items = report.as_dict()
    items["learner"] = cfg.learner
    items["epsilon_source"] = cdata.epsilon_source
    if cfg.learner == "cophik":
        items["rho"] = model.rho
    out = io.ensure_dir(args.out)
    io.write_kv(out / "bound.txt", items)
    log.info("bound %s: lhs=%.6g rhs=%.6g", "holds" if report.passed else "violated", report.lhs, report.rhs)
    return EXIT_OK


def cmd_bench_branin(args) -> int:
    cfg = load_config(args)
    grid = cfg.grid_obj()
    if grid.dim != 2:
        raise io.ConfigError("the Branin benchmark needs a 2-D grid")
    if cfg.n_max < cfg.n_init:
        raise io.ConfigError("need n_init <= n_max")
    bcfg = BenchmarkConfig(
        grid, cfg.members, cfg.n_init, cfg.n_max, cfg.seed, tuple(cfg.learner_list()),
        cfg.optimizer_config(), cfg.rho_config(), cfg.nugget_policy(), thread_count(),
    )
    report = run_benchmark(bcfg)
    out = io.ensure_dir(args.out)
    io.write_field(out / "reference.fld", report.reference)
    io.write_ensemble(out / "ensemble", report.ensemble, GENERATOR, cfg.seed)
    io.write_observations(
        out / "initial_obs.csv",
        ObservationSet.at_nodes(grid, report.initial_nodes, report.reference.values[report.initial_nodes]),
    )
    for kind, traj in report.trajectories.items():
        write_posterior(out, grid, traj.mean, traj.variance, prefix=f"{kind}_")
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["learner", "n_obs", "rel_error"])
        for kind, n, e in report.error_rows():
            w.writerow([kind, n, repr(float(e))])
    io.dump_json(out / "manifest.json", {
        "config": cfg.as_dict(),
        "generator": GENERATOR,
        "seed": cfg.seed,
        "initial_nodes": [int(n) for n in report.initial_nodes],
        "ensemble_mean_error": report.ensemble_mean_error(),
        "final_errors": report.final_errors(),
        "failures": {k: t.failure for k, t in report.trajectories.items()},
    })
    failed = [k for k, t in report.trajectories.items() if t.failure]
    return EXIT_NUMERICAL if failed else EXIT_OK


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cophik", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, ensemble=True, obs=True):
        sp.add_argument("--config", help="INI file with a [run] section")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--grid", help="grid spec lo:hi:n,lo:hi:n,... (overrides config)")
        if ensemble:
            sp.add_argument("--ensemble", help="ensemble directory (required by the ensemble learners)")
            sp.add_argument("--learner", help="kriging, phik, modified-phik or cophik")
        if obs:
            sp.add_argument("--obs", required=True, help="observation CSV")
        return sp

    sp = common(sub.add_parser("ensemble-gen", help="generate a Branin ensemble"), ensemble=False, obs=False)
    sp.add_argument("--members", type=int, help="override the config member count")
    sp.set_defaults(func=cmd_ensemble_gen)

    common(sub.add_parser("fit", help="fit a learner, write mean and RMSE fields")).set_defaults(func=cmd_fit)

    sp = common(sub.add_parser("predict", help="fit a learner, predict at given points"))
    sp.add_argument("--points", required=True, help="CSV of query coordinates with a header row")
    sp.set_defaults(func=cmd_predict)

    sp = common(sub.add_parser("active-learn", help="greedy active learning against an oracle field"))
    sp.add_argument("--oracle", required=True, help="field file with the true values")
    sp.add_argument("--n-max", dest="n_max", type=int, help="override the config n_max")
    sp.set_defaults(func=cmd_active_learn)

    sp = common(sub.add_parser("verify-bound", help="evaluate both sides of the constraint bound"))
    sp.add_argument("--operator", help="dx, dy, d<k>, laplacian or point:i,j,... (overrides config)")
    sp.set_defaults(func=cmd_verify_bound)

    sp = common(sub.add_parser("bench-branin", help="full Branin benchmark"), ensemble=False, obs=False)
    sp.set_defaults(func=cmd_bench_branin)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (io.FormatError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except np.linalg.LinAlgError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (io.ConfigError, OffGridError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
