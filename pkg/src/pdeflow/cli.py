"""Command-line entry point.

Commands
--------
fit         fit the network to the problem's initial condition
evolve      integrate the parameter ODE, writing a trajectory file
diagnose    residual / spectrum / symmetry CSVs from a trajectory
compare-fd  cross-validate a trajectory against the grid reference solver

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
The PDEFLOW_NUM_THREADS environment variable caps the linear-algebra thread
pools for the whole run.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, dynamics, fd_reference, fitting, network, pdes, runio
from .config import RunConfig, load_config
from .errors import ConfigError, NumericalError, PdeflowError


class _Parser(argparse.ArgumentParser):
    # usage problems must exit with code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_common(p):
    p.add_argument("--config", type=Path, default=None, help="TOML (or JSON) config file")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument(
        "--desk-scale", action="store_true",
        help="shrink network/sample/fit sizes to workstation scale",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdeflow", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the initial condition")
    _add_common(p_fit)

    p_ev = sub.add_parser("evolve", help="evolve parameters through time")
    _add_common(p_ev)
    p_ev.add_argument(
        "--from-checkpoint", type=Path, default=None,
        help="trajectory file to start from (default: <out>/theta0.traj)",
    )

    p_diag = sub.add_parser("diagnose", help="diagnostic CSVs from a trajectory")
    p_diag.add_argument("subcommand", choices=["residual", "spectrum", "symmetry"])
    _add_common(p_diag)
    p_diag.add_argument("--trajectory", type=Path, required=True)
    p_diag.add_argument("--stride", type=int, default=1)

    p_cmp = sub.add_parser("compare-fd", help="compare a trajectory against the grid solver")
    _add_common(p_cmp)
    p_cmp.add_argument("--trajectory", type=Path, required=True)
    return parser


def _setup_threads():
    count = os.environ.get("PDEFLOW_NUM_THREADS")
    if not count:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(int(count))
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = count


def _prepare(args) -> tuple[RunConfig, Path]:
    cfg = load_config(
        args.config, seed=args.seed, out_dir=str(args.out) if args.out else None,
        desk_scale=args.desk_scale,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_dict()
    with open(out / "resolved_config.json", "w") as fh:
        import json

        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return cfg, out


def cmd_fit(args) -> int:
    cfg, out = _prepare(args)
    problem = cfg.build_problem()
    rows = []
    theta = fitting.fit_function(
        cfg.network,
        problem.initial_condition,
        cfg.solver,
        seed=(cfg.seed, 0),
        metrics=lambda it, mse: rows.append({"iteration": it, "mse": mse}),
    )
    runio.write_csv(out / "fit_metrics.csv", rows, ["iteration", "mse"])
    runio.save_trajectory(
        out / "theta0.traj", cfg.network, [0.0], [theta],
        cfg_hash=runio.config_hash(cfg.to_dict()),
    )
    print(f"fit: wrote {out / 'theta0.traj'} (final mse {rows[-1]['mse']:.3e})")
    return 0


def cmd_evolve(args) -> int:
    cfg, out = _prepare(args)
    problem = cfg.build_problem()
    ckpt_path = args.from_checkpoint or (out / "theta0.traj")
    spec, times, thetas, _header = runio.load_trajectory(ckpt_path)
    if spec != cfg.network:
        raise ConfigError(
            "checkpoint network spec does not match the configured network"
        )
    t_start = times[-1]
    theta0 = thetas[-1]
    T = problem.final_time
    checkpoints = cfg.resolved_checkpoints(T)
    traj = dynamics.evolve(problem, cfg.network, cfg.solver, theta0, checkpoints, t_start=t_start)
    runio.save_trajectory(
        out / "trajectory.traj", cfg.network, traj.times, traj.thetas,
        cfg_hash=runio.config_hash(cfg.to_dict()),
    )
    runio.write_csv(
        out / "step_metrics.csv",
        [vars(s) for s in traj.steps],
        ["t", "dt", "cg_iterations", "residual", "mvms", "wall_time"],
    )
    if traj.restarts:
        runio.write_csv(
            out / "restart_metrics.csv",
            [vars(r) for r in traj.restarts],
            ["t", "accepted", "refit_mse", "max_deviation"],
        )
    print(f"evolve: {len(traj.steps)} steps to t={traj.times[-1]:.4g}; "
          f"wrote {out / 'trajectory.traj'}")
    return 0


def cmd_diagnose(args) -> int:
    cfg, out = _prepare(args)
    problem = cfg.build_problem()
    spec, times, thetas, _header = runio.load_trajectory(args.trajectory)
    if not times:
        raise ConfigError("trajectory holds no checkpoints")
    traj = dynamics.Trajectory(times=times, thetas=thetas)

    if args.subcommand == "residual":
        rows = []
        for i, (t, theta) in enumerate(zip(times, thetas)):
            td, _stats = dynamics.theta_dot(
                spec, theta, problem, cfg.solver, seed=(cfg.seed, 5000 + i)
            )
            X = pdes.sample_domain(problem, min(cfg.solver.n_samples, 4096), (cfg.seed, 9000 + i))
            rows.append(
                {"t": t, "residual": diagnostics.residual_estimate(spec, theta, td, problem, X)}
            )
        runio.write_csv(out / "residuals.csv", rows, ["t", "residual"])
        print(f"diagnose residual: wrote {out / 'residuals.csv'}")
        return 0

    if args.subcommand == "spectrum":
        rows = diagnostics.spectrum_over_time(
            traj, spec, problem, stride=args.stride,
            n_samples=min(cfg.solver.n_samples, 1024), seed=cfg.seed,
        )
        for i, (t, eigs) in enumerate(rows):
            runio.write_csv(
                out / f"spectrum_t{i}.csv",
                [{"index": j, "eigenvalue": float(e)} for j, e in enumerate(eigs)],
                ["index", "eigenvalue"],
            )
        summary = [{"t": t, "lambda_max": float(e[0])} for t, e in rows]
        runio.write_csv(out / "spectrum_summary.csv", summary, ["t", "lambda_max"])
        print(f"diagnose spectrum: wrote {len(rows)} spectrum files to {out}")
        return 0

    # symmetry
    rows = []
    rng = np.random.default_rng(cfg.seed)
    for t, theta in zip(times, thetas):
        X = pdes.sample_domain(problem, min(cfg.solver.n_samples, 1024), (cfg.seed, 77))
        kind = "relu_rescale" if spec.activation == "relu" else "swish_rescale"
        v = diagnostics.symmetry_direction(spec, theta, kind)
        quotient = diagnostics.symmetry_rayleigh(spec, theta, X, v)
        randoms = []
        for _ in range(32):
            r = rng.standard_normal(spec.param_count)
            r /= np.linalg.norm(r)
            randoms.append(diagnostics.symmetry_rayleigh(spec, theta, X, r))
        rows.append(
            {
                "t": t,
                "kind": kind,
                "rayleigh": quotient,
                "median_random": float(np.median(randoms)),
            }
        )
    runio.write_csv(out / "symmetry.csv", rows, ["t", "kind", "rayleigh", "median_random"])
    print(f"diagnose symmetry: wrote {out / 'symmetry.csv'}")
    return 0


def cmd_compare_fd(args) -> int:
    cfg, out = _prepare(args)
    if cfg.problem not in ("wave", "wave_maps"):
        raise ConfigError("compare-fd supports the wave problem (or flat wave_maps)")
    if cfg.problem == "wave_maps" and cfg.problem_params.get("r_s", 1.0) != 0.0:
        raise ConfigError("compare-fd supports wave_maps only in its flat limit (r_s = 0)")
    problem = cfg.build_problem()
    spec, times, thetas, _header = runio.load_trajectory(args.trajectory)
    traj = dynamics.Trajectory(times=times, thetas=thetas)
    grid_n = int(cfg.problem_params.get("fd_grid_n", 64))
    ic = problem.initial_condition
    phi0 = lambda X: ic(X)[:, 0]
    psi0 = lambda X: ic(X)[:, 1]
    compare_times = [t for t in times if t > 0]
    snaps = fd_reference.fd_wave_solve(
        grid_n, max(compare_times), (phi0, psi0),
        ode_tol=cfg.solver.ode_tol, checkpoint_times=compare_times,
    )
    rows = []
    for (t, field) in snaps:
        disc, _ = fd_reference.grid_compare(traj, spec, field, t)
        slice_disc, slice_field = fd_reference.grid_compare(
            traj, spec, field, t, slice_spec=(0, 0.0)
        )
        runio.save_snapshot(out / f"slice_net_t{t:.4f}", slice_field, t)
        mid = int(np.argmin(np.abs(fd_reference.grid_axes(grid_n))))
        runio.save_snapshot(out / f"slice_fd_t{t:.4f}", field[mid], t)
        rows.append({"t": t, "rel_l2": disc, "rel_l2_slice": slice_disc})
    runio.write_csv(out / "fd_comparison.csv", rows, ["t", "rel_l2", "rel_l2_slice"])
    print(f"compare-fd: wrote {out / 'fd_comparison.csv'}")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "evolve": cmd_evolve,
    "diagnose": cmd_diagnose,
    "compare-fd": cmd_compare_fd,
}


def main(argv=None) -> int:
    _setup_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, PdeflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
