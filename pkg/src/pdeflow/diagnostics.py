"""Quantitative instrumentation: residual estimates, errors against analytic
solutions, mass-matrix spectra over a trajectory, and the layer-rescaling
null/near-null directions of the parameter Jacobian."""

from __future__ import annotations

import numpy as np

from . import linops, network, pdes
from .dynamics import Trajectory, mass_operator
from .errors import ConfigError
from .network import NetworkSpec


def residual_estimate(
    spec: NetworkSpec,
    theta: np.ndarray,
    theta_dot: np.ndarray,
    problem: pdes.PdeProblem,
    X: np.ndarray,
) -> float:
    """Mean squared dynamics residual (1/n) sum ||J_i theta_dot - f_i||^2.

    Costs one JVP plus the jet evaluation.  Pass a batch drawn with a fresh
    seed, disjoint from the one the dynamics were solved on, so the estimate
    is held out.
    """
    cache = network.forward_cache(spec, theta, X)
    jet = network.spatial_jet(spec, theta, X, order=problem.jet_order)
    f = problem.operator(jet, X)
    jv = network.param_jvp(spec, theta, theta_dot, X, cache=cache)
    return float(np.sum((jv - f) ** 2) / X.shape[0])


def relative_error(
    spec: NetworkSpec,
    theta: np.ndarray,
    problem: pdes.PdeProblem,
    t: float,
    X: np.ndarray,
) -> float:
    """Relative L2 discrepancy against the problem's analytic solution.

    Measured over the batch on the first solution component only (the field
    itself, not auxiliary time-derivative components).
    """
    if problem.analytic_solution is None:
        raise ConfigError(f"problem {problem.name!r} has no analytic solution")
    exact = problem.analytic_solution(X, t)[:, 0]
    approx = network.forward(spec, theta, X)[:, 0]
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


def spectrum_over_time(
    trajectory: Trajectory,
    spec: NetworkSpec,
    problem: pdes.PdeProblem,
    stride: int = 1,
    n_samples: int = 1024,
    seed: int = 0,
    max_dim: int = 4000,
) -> list[tuple[float, np.ndarray]]:
    """Dense mass-matrix spectrum at strided trajectory checkpoints.

    Only valid for networks under the dense cap; larger runs must read
    conditioning from CG iteration counts instead.
    """
    if spec.param_count > max_dim:
        raise ConfigError(
            f"parameter count {spec.param_count} exceeds the dense cap {max_dim}; "
            "use a smaller diagnostic network"
        )
    rows = []
    for idx in range(0, len(trajectory.times), stride):
        t = trajectory.times[idx]
        theta = trajectory.thetas[idx]
        X = pdes.sample_domain(problem, n_samples, (seed, idx))
        M = mass_operator(spec, theta, X)
        rows.append((t, linops.dense_spectrum(M, max_dim=max_dim)))
    return rows


SYMMETRY_KINDS = ("relu_rescale", "swish_rescale")


def symmetry_direction(
    spec: NetworkSpec, theta: np.ndarray, kind: str, layer: int = 0
) -> np.ndarray:
    """Unit tangent of the layer-pair rescaling that preserves the function.

    The transform scales (W_l, b_l) of hidden layer ``layer`` by e^alpha and
    the following layer's weights by e^-alpha; its tangent at the identity is
    proportional to (W_l, b_l, -W_{l+1}, 0 elsewhere).  For relu networks the
    transform is an exact invariance, for swish only an approximate one.
    """
    if kind not in SYMMETRY_KINDS:
        raise ConfigError(f"unknown symmetry kind {kind!r}")
    n_hidden = len(spec.hidden_widths)
    if n_hidden < 2:
        raise ConfigError("rescaling pairs need at least 2 hidden layers")
    if not 0 <= layer <= n_hidden - 2:
        raise ConfigError(f"invalid layer index {layer} for {n_hidden} hidden layers")
    theta = np.asarray(theta, dtype=np.float64)
    slices = network.param_slices(spec)
    w_lo, b_lo, _ = slices[layer]
    w_hi, _b_hi, _ = slices[layer + 1]
    v = np.zeros_like(theta)
    v[w_lo] = theta[w_lo]
    v[b_lo] = theta[b_lo]
    v[w_hi] = -theta[w_hi]
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ConfigError("rescaling tangent is zero for this parameter vector")
    return v / norm


def rescale_transform(
    spec: NetworkSpec, theta: np.ndarray, alpha: float, layer: int = 0
) -> np.ndarray:
    """Finite version of the rescaling: e^alpha on the pair's lower layer."""
    n_hidden = len(spec.hidden_widths)
    if not 0 <= layer <= n_hidden - 2:
        raise ConfigError(f"invalid layer index {layer} for {n_hidden} hidden layers")
    out = np.asarray(theta, dtype=np.float64).copy()
    slices = network.param_slices(spec)
    w_lo, b_lo, _ = slices[layer]
    w_hi, _b_hi, _ = slices[layer + 1]
    out[w_lo] *= np.exp(alpha)
    out[b_lo] *= np.exp(alpha)
    out[w_hi] *= np.exp(-alpha)
    return out


def symmetry_rayleigh(
    spec: NetworkSpec, theta: np.ndarray, X: np.ndarray, v: np.ndarray
) -> float:
    """Rayleigh quotient v^T Mhat v = ||J v||^2 / n for a unit direction."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isclose(np.linalg.norm(v), 1.0, atol=1e-8):
        raise ConfigError("direction must have unit norm")
    jv = network.param_jvp(spec, theta, v, X)
    return float(np.sum(jv**2) / X.shape[0])
