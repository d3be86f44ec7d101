"""Run configuration: per-problem defaults, file parsing, desk-scale preset.

Config files are TOML (JSON also accepted) with optional [network], [solver]
and [run] tables plus a [problem_params] table forwarded to the problem
builder.  Every omitted field falls back to the production defaults for the
selected problem; the desk-scale preset shrinks the network, sample count and
fit length for workstation runs without touching anything set explicitly.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import pdes
from .dynamics import SolverConfig
from .errors import ConfigError
from .network import NetworkSpec

PROBLEMS = ("advection", "wave", "vlasov", "fokker_planck", "wave_maps", "fit_only")

# architecture facts and production defaults per problem
_PROBLEM_INFO = {
    "advection": dict(k=1, envelope="none", integrator="rk45", n_samples=20000),
    "wave": dict(D=3, k=2, envelope="dirichlet_cube", integrator="rk45", n_samples=20000),
    "vlasov": dict(D=6, k=1, envelope="none", integrator="rk45", n_samples=20000),
    "fokker_planck": dict(k=1, envelope="dirichlet_cube", integrator="rk45", n_samples=20000),
    "wave_maps": dict(D=3, k=2, envelope="dirichlet_cube", integrator="rk23", n_samples=50000),
    "fit_only": dict(D=3, k=1, envelope="none", integrator="rk45", n_samples=20000),
}

DESK_SCALE = dict(
    hidden_widths=(64, 64),
    n_samples=2048,
    fit_iters=3000,
    fit_lr=3e-3,
    precond_rank=100,
    n_restarts=3,
    head_batch=8192,
)


@dataclass
class RunConfig:
    """Fully resolved description of one run."""

    problem: str
    problem_params: dict
    network: NetworkSpec
    solver: SolverConfig
    final_time: float | None = None  # None: the problem's own horizon
    checkpoint_times: list[float] | None = None  # None: 4 evenly spaced
    seed: int = 0
    out_dir: str = "runs/out"
    desk_scale: bool = False

    def build_problem(self) -> pdes.PdeProblem:
        builder = pdes.PROBLEM_BUILDERS[self.problem]
        kwargs = dict(self.problem_params)
        kwargs.pop("fd_grid_n", None)  # consumed by the comparison command
        if self.final_time is not None and self.problem != "fit_only":
            kwargs["final_time"] = self.final_time
        try:
            return builder(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad problem_params for {self.problem!r}: {exc}") from exc

    def resolved_checkpoints(self, T: float) -> list[float]:
        if self.checkpoint_times is not None:
            return [float(t) for t in self.checkpoint_times]
        return [T * i / 4 for i in range(1, 5)]

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "problem_params": self.problem_params,
            "network": self.network.to_dict(),
            "solver": dataclasses.asdict(self.solver),
            "final_time": self.final_time,
            "checkpoint_times": self.checkpoint_times,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "desk_scale": self.desk_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            problem=d["problem"],
            problem_params=dict(d.get("problem_params", {})),
            network=NetworkSpec.from_dict(d["network"]),
            solver=SolverConfig(**d["solver"]),
            final_time=d.get("final_time"),
            checkpoint_times=d.get("checkpoint_times"),
            seed=int(d.get("seed", 0)),
            out_dir=d.get("out_dir", "runs/out"),
            desk_scale=bool(d.get("desk_scale", False)),
        )


def _read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_bytes()
    if path.suffix == ".json":
        return json.loads(text.decode())
    try:
        return tomllib.loads(text.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc


def _problem_dimension(problem: str, params: dict) -> int:
    info = _PROBLEM_INFO[problem]
    if problem == "advection":
        velocity = params.get("velocity", [1.0, 0.0, 0.0])
        return len(velocity)
    if problem == "fokker_planck":
        return int(params.get("d", 8))
    return info["D"]


def resolve_config(
    file_data: dict | None = None,
    *,
    seed: int | None = None,
    out_dir: str | None = None,
    desk_scale: bool = False,
) -> RunConfig:
    """Merge file values over per-problem defaults (and the desk preset).

    Precedence, lowest to highest: production defaults, desk-scale preset
    (when requested), config-file values, CLI overrides.
    """
    data = dict(file_data or {})
    # accept both the authoring schema (a [run] table) and the flat resolved
    # form this function itself persists, so a saved run reproduces itself
    run_table = dict(data.get("run", {}))
    for key in ("final_time", "checkpoint_times", "seed", "out_dir", "desk_scale"):
        if key in data and key not in run_table and data[key] is not None:
            run_table[key] = data[key]
    data["run"] = run_table
    problem = data.get("problem", "wave")
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}; choose one of {PROBLEMS}")
    info = _PROBLEM_INFO[problem]
    params = dict(data.get("problem_params", {}))
    if problem == "advection":
        params.setdefault("velocity", [1.0, 0.0, 0.0])
    if problem == "fokker_planck":
        params.setdefault("d", 8)

    net_file = dict(data.get("network", {}))
    desk = desk_scale or bool(data.get("run", {}).get("desk_scale", False))
    net_kwargs = dict(
        input_dim=_problem_dimension(problem, params),
        output_dim=info["k"],
        envelope=info["envelope"],
    )
    if desk and "hidden_widths" not in net_file:
        net_kwargs["hidden_widths"] = DESK_SCALE["hidden_widths"]
    net_kwargs.update(net_file)
    net_kwargs["hidden_widths"] = tuple(net_kwargs.get("hidden_widths", (100, 100, 100)))
    network_spec = NetworkSpec(**net_kwargs)

    solver_file = dict(data.get("solver", {}))
    solver_kwargs = dict(integrator=info["integrator"], n_samples=info["n_samples"])
    if desk:
        for key in ("n_samples", "fit_iters", "fit_lr", "precond_rank", "n_restarts", "head_batch"):
            if key not in solver_file:
                solver_kwargs[key] = DESK_SCALE[key]
    solver_kwargs.update(solver_file)
    run = dict(data.get("run", {}))
    if seed is None:
        seed = int(run.get("seed", 0))
    solver_kwargs["seed"] = seed
    try:
        solver = SolverConfig(**solver_kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad [solver] table: {exc}") from exc

    return RunConfig(
        problem=problem,
        problem_params=params,
        network=network_spec,
        solver=solver,
        final_time=run.get("final_time"),
        checkpoint_times=run.get("checkpoint_times"),
        seed=seed,
        out_dir=out_dir if out_dir is not None else run.get("out_dir", "runs/out"),
        desk_scale=desk,
    )


def load_config(
    path=None, *, seed=None, out_dir=None, desk_scale: bool = False
) -> RunConfig:
    data = _read_config_file(path) if path is not None else None
    return resolve_config(data, seed=seed, out_dir=out_dir, desk_scale=desk_scale)
