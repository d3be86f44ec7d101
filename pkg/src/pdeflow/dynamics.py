"""Monte-Carlo parameter dynamics and the adaptive evolution loop.

The network parameters follow the implicitly defined ODE

    (Mhat(theta) + mu I) dtheta/dt = Fhat(theta)

where Mhat = J^T J / n is the Gram (mass) operator of the parameter Jacobian
over a fresh sample batch and Fhat = J^T f / n pairs the Jacobian with the
PDE right-hand side evaluated through exact spatial jets.  Each evaluation
solves the shifted system by preconditioned conjugate gradients with a
randomized low-rank preconditioner; the solution feeds an embedded adaptive
Runge-Kutta pair.  Scheduled restarts refit a fresh network to the current
one to keep the systems well conditioned.

Everything here is deterministic for a fixed seed: sample batches and
sketches are drawn from seed sequences derived from (seed, attempt counter),
and reductions run in numpy's fixed evaluation order, so repeated runs of
the same configuration replay bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import linops, network, pdes
from .errors import ConfigError, NumericalError
from .integrate import TABLEAUS, integrate_adaptive
from .linops import SolveStats, SymmetricOperator
from .network import ForwardCache, NetworkSpec


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the evolution and fitting pipeline.

    The defaults are the production settings; desk-scale runs override the
    sample count, network size and fit length through the run configuration.
    """

    ode_tol: float = 1e-4  # absolute max-norm tolerance on theta increments
    ode_rtol: float = 1e-4  # relative threshold of the step error test
    integrator: str = "rk45"  # rk45 | rk23
    n_samples: int = 20000
    cg_tol: float = 1e-8
    cg_maxiter: int = 1000
    precond_rank: int = 200
    reg_mu: float = 1e-6
    n_restarts: int = 10
    fit_iters: int = 50000
    fit_lr: float = 1e-3
    fit_lr_decay: float = 0.01  # cosine-decay floor as a fraction of fit_lr
    fit_batch: int = 2048
    head_lambda: float = 1e-8
    head_batch: int = 8192
    restart_mse_gate: float = 1e-6
    restart_dev_gate: float = 1e-3
    seed: int = 0
    debug: bool = False

    def __post_init__(self):
        positive = (
            "ode_tol", "ode_rtol", "n_samples", "cg_tol", "cg_maxiter",
            "precond_rank", "reg_mu", "fit_iters", "fit_lr", "fit_lr_decay",
            "fit_batch", "head_lambda", "head_batch", "restart_mse_gate",
            "restart_dev_gate",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_restarts < 0:
            raise ConfigError("n_restarts must be >= 0")
        if self.integrator not in TABLEAUS:
            raise ConfigError(f"unknown integrator {self.integrator!r}")


@dataclass
class IntegratorState:
    """Bookkeeping of the evolution driver."""

    t: float
    theta: np.ndarray
    dt: float
    step_count: int = 0
    last_stats: SolveStats | None = None


@dataclass
class StepRecord:
    """Per accepted step metrics (rejected attempts are folded into mvms)."""

    t: float
    dt: float
    cg_iterations: int
    residual: float
    mvms: int
    wall_time: float


@dataclass
class RestartRecord:
    t: float
    accepted: bool
    refit_mse: float
    max_deviation: float


@dataclass
class Trajectory:
    """Checkpointed parameter path with per-step solver statistics."""

    times: list[float] = field(default_factory=list)
    thetas: list[np.ndarray] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    restarts: list[RestartRecord] = field(default_factory=list)


def _eval_seeds(seed) -> tuple:
    """Derive independent (sampling, sketch) seeds from one evaluation seed."""
    entropy = seed if isinstance(seed, (tuple, list)) else (int(seed),)
    return tuple(np.random.SeedSequence(entropy).spawn(2))


def mass_operator(
    spec: NetworkSpec,
    theta: np.ndarray,
    X: np.ndarray,
    cache: ForwardCache | None = None,
    debug: bool = False,
) -> SymmetricOperator:
    """Matrix-free Gram operator v -> J^T J v / n over the batch.

    One product costs a JVP and a VJP against a shared forward cache; cost
    and memory are linear in (n + p).  The operator is symmetric PSD by
    construction since both factors use the same Jacobian.
    """
    if X.shape[0] == 0:
        raise ConfigError("sample batch must be nonempty")
    if cache is None:
        cache = network.forward_cache(spec, theta, X)
    n = X.shape[0]
    p = spec.param_count

    def matvec(v):
        jv = network.param_jvp(spec, theta, v, X, cache=cache)
        if not np.all(np.isfinite(jv)):
            raise NumericalError("non-finite values in Jacobian-vector product", stage="jvp")
        out = network.param_vjp(spec, theta, jv, X, cache=cache) / n
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite values in transposed product", stage="vjp")
        return out

    def matmat(V, _chunk=64):
        out = np.empty_like(V)
        for start in range(0, V.shape[1], _chunk):
            block = V[:, start : start + _chunk].T  # (m, p)
            jv = network.param_jvp(spec, theta, block, X, cache=cache)
            if not np.all(np.isfinite(jv)):
                raise NumericalError("non-finite values in Jacobian-vector product", stage="jvp")
            out[:, start : start + _chunk] = (
                network.param_vjp(spec, theta, jv, X, cache=cache).T / n
            )
        return out

    op = SymmetricOperator(p, matvec, matmat=matmat, psd=True)
    if debug:
        rng = np.random.default_rng(0)
        u = rng.standard_normal(p)
        v = rng.standard_normal(p)
        gap = abs(u @ op.mvm(v) - op.mvm(u) @ v)
        if gap > 1e-10 * np.linalg.norm(u) * np.linalg.norm(v):
            raise NumericalError("mass operator failed the symmetry probe", gap=gap)
    return op


def rhs_vector(
    spec: NetworkSpec,
    theta: np.ndarray,
    problem: pdes.PdeProblem,
    X: np.ndarray,
    cache: ForwardCache | None = None,
) -> np.ndarray:
    """Assemble Fhat = J^T f / n with f_i = L[N](x_i) from exact spatial jets."""
    if problem.jet_order > 2:
        raise ConfigError("operators may use spatial derivatives up to order 2 only")
    jet = network.spatial_jet(spec, theta, X, order=problem.jet_order)
    f = problem.operator(jet, X)
    bad = ~np.isfinite(f)
    if bad.any():
        index = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise NumericalError(
            f"non-finite right-hand side at sample index {index}", sample=index
        )
    n = X.shape[0]
    return network.param_vjp(spec, theta, f, X, cache=cache) / n


def theta_dot(
    spec: NetworkSpec,
    theta: np.ndarray,
    problem: pdes.PdeProblem,
    cfg: SolverConfig,
    seed,
) -> tuple[np.ndarray, SolveStats]:
    """One evaluation of the parameter dynamics on a fresh sample batch.

    Builds the mass operator and right-hand side on the same batch, sketches
    a low-rank preconditioner, and solves the mu-shifted system by CG.  CG
    failing to converge within the iteration budget is fatal here: the
    returned direction would not meet the requested residual certificate.
    """
    seed_samples, seed_sketch = _eval_seeds(seed)
    X = pdes.sample_domain(problem, cfg.n_samples, seed_samples)
    cache = network.forward_cache(spec, theta, X)
    M = mass_operator(spec, theta, X, cache=cache, debug=cfg.debug)
    F = rhs_vector(spec, theta, problem, X, cache=cache)
    rank = min(cfg.precond_rank, spec.param_count)
    precond = linops.make_nystrom_preconditioner(M, rank, seed_sketch, nu=cfg.reg_mu)
    system = linops.shifted(M, cfg.reg_mu)
    x, stats = linops.cg_solve(
        system, F, preconditioner=precond, tol=cfg.cg_tol, maxiter=cfg.cg_maxiter
    )
    stats.mvms = M.mvm_count  # include the sketch cost in the telemetry
    if not stats.converged:
        raise NumericalError(
            f"CG did not reach tol {cfg.cg_tol} within {cfg.cg_maxiter} iterations "
            f"(residual {stats.final_residual:.3e})",
            stats=stats,
        )
    return x, stats


def evolve(
    problem: pdes.PdeProblem,
    spec: NetworkSpec,
    cfg: SolverConfig,
    theta0: np.ndarray,
    checkpoint_times,
    t_start: float = 0.0,
) -> Trajectory:
    """Integrate the parameter ODE from t_start to the problem's final time.

    Steps land exactly on checkpoint times (where the state is recorded) and
    on the evenly spaced restart times (where a fresh network is refit to the
    current one).  Every step attempt draws a fresh sample batch, held fixed
    across the stages of that attempt, with seeds derived from (cfg.seed,
    attempt counter): identical configurations replay bit-identically.  A
    positive ``t_start`` resumes an interrupted run from its last checkpoint.
    """
    T = problem.final_time
    if T <= 0:
        raise ConfigError("problem final time must be positive for evolution")
    if not 0.0 <= t_start < T:
        raise ConfigError("t_start must lie in [0, T)")
    checkpoints = sorted({float(t) for t in checkpoint_times if float(t) > t_start})
    if any(t < 0 or t > T for t in checkpoints):
        raise ConfigError("checkpoint times must lie in [0, T]")
    if not checkpoints or checkpoints[-1] < T:
        checkpoints.append(T)
    restarts = [
        t for i in range(1, cfg.n_restarts + 1)
        if (t := i * T / (cfg.n_restarts + 1)) > t_start
    ]

    traj = Trajectory()
    traj.times.append(t_start)
    traj.thetas.append(np.asarray(theta0, dtype=np.float64).copy())

    state = IntegratorState(t=t_start, theta=traj.thetas[0], dt=20.0 * T * cfg.ode_tol)
    attempt_counter = 0
    pending: list[SolveStats] = []
    step_clock = [time.monotonic()]

    def on_attempt():
        # one fresh batch per trial step, frozen across its stages: the
        # embedded error estimate then measures truncation of the sampled
        # vector field rather than batch-to-batch noise
        nonlocal attempt_counter
        attempt_counter += 1

    def rhs(t, th):
        td, stats = theta_dot(spec, th, problem, cfg, seed=(cfg.seed, attempt_counter))
        pending.append(stats)
        return td

    checkpoint_set = set(checkpoints)
    restart_set = set(restarts)

    def on_step(t, y, dt):
        now = time.monotonic()
        stats = pending[-1]
        traj.steps.append(
            StepRecord(
                t=t,
                dt=dt,
                cg_iterations=max(s.iterations for s in pending),
                residual=stats.final_residual,
                mvms=sum(s.mvms for s in pending),
                wall_time=now - step_clock[0],
            )
        )
        pending.clear()
        step_clock[0] = now
        state.t = t
        state.dt = dt
        state.step_count += 1
        state.last_stats = stats

    def on_stop(t, y):
        replacement = None
        matches_checkpoint = any(abs(t - c) <= 1e-12 * max(1.0, T) for c in checkpoint_set)
        if matches_checkpoint:
            traj.times.append(t)
            traj.thetas.append(y.copy())
        if any(abs(t - r) <= 1e-12 * max(1.0, T) for r in restart_set) and t < T:
            from . import fitting  # deferred: fitting depends on this module

            eval_seed = (cfg.seed, 10**6 + len(traj.restarts))
            new_theta, info = fitting.restart_refit(spec, y, cfg, eval_seed)
            traj.restarts.append(
                RestartRecord(
                    t=t,
                    accepted=info["accepted"],
                    refit_mse=info["refit_mse"],
                    max_deviation=info["max_deviation"],
                )
            )
            replacement = new_theta
        return replacement

    stop_times = sorted(set(checkpoints) | {r for r in restarts})
    integrate_adaptive(
        rhs,
        state.theta,
        t_start,
        T,
        state.dt,
        TABLEAUS[cfg.integrator],
        atol=cfg.ode_tol,
        rtol=cfg.ode_rtol,
        stop_times=stop_times,
        on_step=on_step,
        on_stop=on_stop,
        on_attempt=on_attempt,
    )
    return traj
