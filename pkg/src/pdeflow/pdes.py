"""Concrete initial-value problems: right-hand-side operators, initial
conditions, analytic solutions where known, and domain sampling.

Every problem lives on the hyper-rectangle [-1, 1]^D.  Operators consume a
batched ``SpatialJet`` (value / gradient / Hessian arrays) together with the
evaluation points and return the time derivative of each solution component,
vectorized over the batch.  All operators here are linear in the jet entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .network import SpatialJet


@dataclass(frozen=True)
class PdeProblem:
    """An initial-value problem du/dt = L[u] on [-1, 1]^D.

    ``operator(jet, X)`` maps batched jets at points X (n, D) to du/dt
    (n, k).  ``jet_order`` is the highest spatial derivative the operator
    consumes (at most 2).  ``analytic_solution(X, t)``, when available,
    returns the exact solution components at time t.
    """

    name: str
    spatial_dim: int
    components: int
    operator: Callable[[SpatialJet, np.ndarray], np.ndarray]
    initial_condition: Callable[[np.ndarray], np.ndarray]
    final_time: float
    jet_order: int = 2
    analytic_solution: Optional[Callable[[np.ndarray, float], np.ndarray]] = None


def sample_domain(problem: PdeProblem, n: int, seed) -> np.ndarray:
    """n i.i.d. uniform points strictly inside the problem's cube.

    Deterministic per seed; the open-domain contract is enforced by
    redrawing the (measure-zero) draws that land exactly on the boundary.
    """
    if n < 1:
        raise ConfigError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, problem.spatial_dim))
    while True:
        on_edge = np.abs(X) >= 1.0
        if not on_edge.any():
            return X
        X[on_edge] = rng.uniform(-1.0, 1.0, size=int(on_edge.sum()))


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------

def advection_problem(velocity, width: float = 0.25, final_time: float = 0.5) -> PdeProblem:
    """Constant-velocity transport du/dt = -c . grad(u) of a Gaussian bump.

    The exact solution is the translated initial condition, valid while the
    bump stays inside the cube.
    """
    c = np.asarray(velocity, dtype=np.float64)
    D = c.shape[0]
    s2 = 2.0 * width * width

    def ic(X):
        X = np.atleast_2d(X)
        return np.exp(-np.sum(X * X, axis=1) / s2)[:, None]

    def op(jet, X):
        return -(jet.grad[:, 0, :] @ c)[:, None]

    def exact(X, t):
        return ic(np.atleast_2d(X) - t * c)

    return PdeProblem(
        name="advection",
        spatial_dim=D,
        components=1,
        operator=op,
        initial_condition=ic,
        final_time=final_time,
        jet_order=1,
        analytic_solution=exact,
    )


# ---------------------------------------------------------------------------
# wave equation
# ---------------------------------------------------------------------------

def _radial_pulse(s):
    """Profile f(s) = 2 s^2 exp(-200 s^2) of the outgoing spherical pulse."""
    return 2.0 * s * s * np.exp(-200.0 * s * s)


def _radial_pulse_deriv(s):
    return (4.0 * s - 800.0 * s**3) * np.exp(-200.0 * s * s)


def wave_solution(X, t: float) -> np.ndarray:
    """Exact [phi, dphi/dt] of the 3D wave equation for the radial pulse data.

    Outside the light cone (r >= t) this is the outgoing spherical wave
    f(t - r)/r; inside (r < t) the incoming image generated by regularity at
    the origin cancels the field exactly, so the solution is zero there.  At
    t = 0 it reduces to phi = 2 r exp(-200 r^2) with the removable
    singularity at the origin filled by its limit.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    r = np.linalg.norm(X, axis=1)
    out = np.zeros((X.shape[0], 2))
    outside = r >= t
    rr = r[outside]
    safe = np.where(rr > 0, rr, 1.0)
    s = t - rr
    # f(s)/r with f(s) = 2 s^2 e^{-200 s^2}; at r -> 0 (only reachable for
    # t = 0) the limit is 2 r e^{-200 r^2} -> 0
    out[outside, 0] = np.where(rr > 0, _radial_pulse(s) / safe, 0.0)
    out[outside, 1] = np.where(rr > 0, _radial_pulse_deriv(s) / safe, 0.0)
    if t == 0.0:
        # psi_0 = -f'(r)/r extends smoothly to -4 at the origin
        out[:, 1] = -(4.0 - 800.0 * r * r) * np.exp(-200.0 * r * r)
    return out


def wave_problem(final_time: float = 0.5) -> PdeProblem:
    """3D wave equation as the first-order system u = [phi, psi].

    du/dt = [psi, laplacian(phi)], with the radial-pulse analytic solution
    attached for validation.
    """

    def op(jet, X):
        lap = np.trace(jet.hess[:, 0, :, :], axis1=1, axis2=2)
        return np.stack([jet.value[:, 1], lap], axis=1)

    return PdeProblem(
        name="wave",
        spatial_dim=3,
        components=2,
        operator=op,
        initial_condition=lambda X: wave_solution(X, 0.0),
        final_time=final_time,
        jet_order=2,
        analytic_solution=wave_solution,
    )


# ---------------------------------------------------------------------------
# Vlasov equation (fixed external field)
# ---------------------------------------------------------------------------

def electric_field(x: np.ndarray) -> np.ndarray:
    """E(x) = grad exp(-|x|^2) = -2 x exp(-|x|^2), vectorized over rows."""
    x = np.atleast_2d(x)
    return -2.0 * x * np.exp(-np.sum(x * x, axis=1))[:, None]


def vlasov_problem(final_time: float = 0.5, sigma: float = 0.3) -> PdeProblem:
    """Collisionless transport of a phase-space density in a fixed field.

    Coordinates are (position, velocity) in R^3 x R^3;
    du/dt = -v . grad_x u - E(x) . grad_v u with unit charge and mass.
    """
    norm = (2.0 * np.pi * sigma**2) ** -3  # product of two 3D Gaussian factors

    def ic(X):
        X = np.atleast_2d(X)
        return (norm * np.exp(-np.sum(X * X, axis=1) / (2.0 * sigma**2)))[:, None]

    def op(jet, X):
        x, v = X[:, :3], X[:, 3:]
        gx = jet.grad[:, 0, :3]
        gv = jet.grad[:, 0, 3:]
        E = electric_field(x)
        return -(np.sum(v * gx, axis=1) + np.sum(E * gv, axis=1))[:, None]

    return PdeProblem(
        name="vlasov",
        spatial_dim=6,
        components=1,
        operator=op,
        initial_condition=ic,
        final_time=final_time,
        jet_order=1,
    )


# ---------------------------------------------------------------------------
# Fokker-Planck with a harmonic trap and mean-field coupling
# ---------------------------------------------------------------------------

def fokker_planck_problem(
    d: int = 8,
    final_time: float = 0.5,
    diffusion: float = 0.01,
    coupling: float = 0.25,
    target: float = 0.2,
) -> PdeProblem:
    """du/dt = D lap(u) - div(h u) for interacting trapped particles.

    The drift is h(x) = (a - x) + coupling * (ones ones^T / d - I) x with
    a = target * ones; its divergence is the constant
    -d + coupling * (1 - d), so div(h u) = h . grad(u) + u * div(h).
    """
    if not 1 <= d <= 20:
        raise ConfigError("dimension must be in [1, 20]")
    a = np.full(d, target)
    div_h = -d + coupling * (1.0 - d)

    def drift(X):
        mean = X.mean(axis=1, keepdims=True)
        return (a - X) + coupling * (mean - X)

    def ic(X):
        X = np.atleast_2d(X)
        return (0.75**d * np.prod(1.0 - X * X, axis=1))[:, None]

    def op(jet, X):
        lap = np.trace(jet.hess[:, 0, :, :], axis1=1, axis2=2)
        adv = np.sum(drift(X) * jet.grad[:, 0, :], axis=1)
        return (diffusion * lap - adv - jet.value[:, 0] * div_h)[:, None]

    return PdeProblem(
        name="fokker_planck",
        spatial_dim=d,
        components=1,
        operator=op,
        initial_condition=ic,
        final_time=final_time,
        jet_order=2,
    )


# ---------------------------------------------------------------------------
# static black-hole metric and the curved-space wave equation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metric:
    """Static, block-diagonal spacetime metric on a spatial slice.

    ``g_tt(X)`` is the (negative) time-time component, ``g_spatial(X)`` the
    spatial block, and ``dg_spatial`` / ``dg_tt`` their analytic spatial
    derivatives (index order: d[g_ij]/dx_k -> (..., i, j, k)).  All callables
    are vectorized over rows of X.
    """

    g_tt: Callable[[np.ndarray], np.ndarray]
    g_spatial: Callable[[np.ndarray], np.ndarray]
    dg_spatial: Callable[[np.ndarray], np.ndarray]
    dg_tt: Callable[[np.ndarray], np.ndarray]
    r_s: float
    center: np.ndarray


def schwarzschild_metric(r_s: float = 1.0, center=(-2.0, 0.0, 0.0)) -> Metric:
    """Black-hole metric in Cartesian-like coordinates, horizon radius r_s.

    g_tt = -(1 - r_s/r),  g_ij = delta_ij + w_i w_j / (r^2 (r/r_s - 1))
    with w = x - center and r = |w|.  Evaluation requires r > r_s; with the
    default center the horizon touches the cube only at the boundary point
    (-1, 0, 0), so the open cube is safe.
    """
    c = np.asarray(center, dtype=np.float64)

    def _radii(X):
        X = np.atleast_2d(X)
        w = X - c
        r = np.linalg.norm(w, axis=1)
        if r_s > 0 and np.any(r <= r_s * (1 + 1e-12)):
            raise DomainError(
                f"metric evaluated at radius <= r_s={r_s}; the horizon lies "
                "outside the open computational domain"
            )
        return w, r

    def g_tt(X):
        _w, r = _radii(X)
        return -(1.0 - r_s / r)

    def g_spatial(X):
        w, r = _radii(X)
        if r_s == 0.0:
            return np.broadcast_to(np.eye(c.size), (r.size, c.size, c.size)).copy()
        a = r_s / (r**3 - r_s * r**2)  # 1 / (r^2 (r/r_s - 1))
        outer = w[:, :, None] * w[:, None, :]  # exactly symmetric
        return np.eye(c.size) + a[:, None, None] * outer

    def dg_spatial(X):
        w, r = _radii(X)
        n, D = w.shape
        if r_s == 0.0:
            return np.zeros((n, D, D, D))
        denom = r**3 - r_s * r**2
        a = r_s / denom
        da_dr = -r_s * (3.0 * r**2 - 2.0 * r_s * r) / denom**2
        # d a / dx_k = a'(r) w_k / r; keep every term exactly symmetric in
        # (i, j) so downstream exact-symmetry contracts hold bitwise
        da = (da_dr / r)[:, None] * w
        outer = w[:, :, None] * w[:, None, :]
        term1 = da[:, None, None, :] * outer[:, :, :, None]
        eye = np.eye(D)
        half = eye[None, :, None, :] * w[:, None, :, None]  # delta_ik w_j
        term2 = a[:, None, None, None] * (half + np.swapaxes(half, 1, 2))
        return term1 + term2

    def dg_tt(X):
        w, r = _radii(X)
        if r_s == 0.0:
            return np.zeros_like(w)
        return -(r_s / r**3)[:, None] * w

    return Metric(
        g_tt=g_tt,
        g_spatial=g_spatial,
        dg_spatial=dg_spatial,
        dg_tt=dg_tt,
        r_s=r_s,
        center=c,
    )


def christoffel(metric: Metric, x: np.ndarray) -> np.ndarray:
    """Connection coefficients of the static metric, shape (1+D, 1+D, 1+D).

    Index 0 is time; the result is Gamma^sigma_{mu nu}, symmetric in the two
    lower indices.  Time derivatives of the metric vanish by staticity.
    Batched input (n, D) returns (n, 1+D, 1+D, 1+D).
    """
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.asarray(x).ndim == 1
    n, D = X.shape
    G = np.zeros((n, D + 1, D + 1))
    G[:, 0, 0] = metric.g_tt(X)
    G[:, 1:, 1:] = metric.g_spatial(X)
    dG = np.zeros((n, D + 1, D + 1, D + 1))  # last index: derivative direction
    dG[:, 0, 0, 1:] = metric.dg_tt(X)
    dG[:, 1:, 1:, 1:] = metric.dg_spatial(X)
    Ginv = np.linalg.inv(G)
    # Gamma^s_{mn} = 1/2 g^{sr} (d_m g_{rn} + d_n g_{rm} - d_r g_{mn});
    # arrange each term with axes ordered (rho, mu, nu)
    t1 = np.transpose(dG, (0, 1, 3, 2))  # [rho, mu, nu] = d_mu g_{rho nu}
    t2 = dG                              # [rho, mu, nu] = d_nu g_{rho mu}
    t3 = np.transpose(dG, (0, 3, 1, 2))  # [rho, mu, nu] = d_rho g_{mu nu}
    inner = t1 + t2 - t3
    gamma = 0.5 * np.einsum("bsr,brmn->bsmn", Ginv, inner)
    return gamma[0] if single else gamma


def wave_packet_ic(f: float, s1: float, s2: float) -> Callable[[np.ndarray], np.ndarray]:
    """Sum of two frequency-modulated Gaussian packets in 3D.

    u0(x) = 30 (2 pi s1^2)^-1 exp(-|v|^2 / 2 s1^2) cos(2 pi f x.n)
          + 24 (2 pi s2^2)^-1 exp(-|w|^2 / 2 s2^2) cos(2 pi f x.m)
    with v = x - (0, 1/2, 1/2), w = x + (1, 1, 1)/6, n = (1, 1, 0)/sqrt(2)
    and the x-dependent modulation direction m = (x_1/6, 1/2, 0).
    """
    if s1 <= 0 or s2 <= 0:
        raise ConfigError("packet widths must be positive")
    if f < 0:
        raise ConfigError("frequency must be >= 0")
    c1 = np.array([0.0, 0.5, 0.5])
    c2 = np.array([1.0, 1.0, 1.0]) / 6.0
    nhat = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)

    def ic(X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        v = X - c1
        w = X + c2
        phase1 = 2.0 * np.pi * f * (X @ nhat)
        # modulation direction (x1/6, 1/2, 0) makes the phase quadratic in x1
        phase2 = 2.0 * np.pi * f * 0.5 * (X[:, 1] + X[:, 0] ** 2 / 3.0)
        term1 = 30.0 / (2.0 * np.pi * s1**2) * np.exp(-np.sum(v * v, axis=1) / (2 * s1**2))
        term2 = 24.0 / (2.0 * np.pi * s2**2) * np.exp(-np.sum(w * w, axis=1) / (2 * s2**2))
        return (term1 * np.cos(phase1) + term2 * np.cos(phase2))[:, None]

    return ic


def wave_maps_problem(
    ic: str = "wave_packet",
    final_time: float = 0.5,
    r_s: float = 1.0,
    packet_frequency: float = 2.0,
    packet_width1: float = 0.1,
    packet_width2: float = 0.15,
) -> PdeProblem:
    """Scalar wave equation on the static curved background, u = [phi, psi].

    First-order reduction of g^{mu nu} d_mu d_nu phi = g^{mu nu}
    Gamma^sigma_{mu nu} d_sigma phi using the block-diagonal static metric:

        dphi/dt = psi
        dpsi/dt = -(1/g^tt) [ g^ij d_i d_j phi - C^t psi - C^k d_k phi ]

    where C^sigma = g^{mu nu} Gamma^sigma_{mu nu}.  With r_s = 0 this reduces
    exactly to the flat wave equation.
    """
    if ic != "wave_packet":
        raise ConfigError(f"unknown initial condition {ic!r}")
    metric = schwarzschild_metric(r_s=r_s)
    packet = wave_packet_ic(packet_frequency, packet_width1, packet_width2)

    def initial(X):
        X = np.atleast_2d(X)
        phi = packet(X)[:, 0]
        return np.stack([phi, np.zeros_like(phi)], axis=1)

    def op(jet, X):
        n = X.shape[0]
        gtt = metric.g_tt(X)
        gsp = metric.g_spatial(X)
        ginv_sp = np.linalg.inv(gsp)
        ginv_tt = 1.0 / gtt
        gamma = christoffel(metric, X)  # (n, 1+D, 1+D, 1+D)
        # C^sigma = g^{mu nu} Gamma^sigma_{mu nu}; the inverse metric is
        # block-diagonal so only the tt and spatial blocks contribute
        C = ginv_tt[:, None] * gamma[:, :, 0, 0] + np.einsum(
            "bij,bsij->bs", ginv_sp, gamma[:, :, 1:, 1:]
        )
        phi_grad = jet.grad[:, 0, :]
        phi_hess = jet.hess[:, 0, :, :]
        psi = jet.value[:, 1]
        spatial = np.einsum("bij,bij->b", ginv_sp, phi_hess)
        dpsi = -(spatial - C[:, 0] * psi - np.sum(C[:, 1:] * phi_grad, axis=1)) / ginv_tt
        return np.stack([psi, dpsi], axis=1)

    return PdeProblem(
        name="wave_maps",
        spatial_dim=3,
        components=2,
        operator=op,
        initial_condition=initial,
        final_time=final_time,
        jet_order=2,
    )


# ---------------------------------------------------------------------------
# fit-only pseudo-problem (representation experiments, no evolution)
# ---------------------------------------------------------------------------

def fit_only_problem(
    packet_frequency: float = 5.0,
    packet_width1: float = 0.1,
    packet_width2: float = 0.15,
) -> PdeProblem:
    """Stationary target for pure fitting experiments: L[u] = 0."""
    packet = wave_packet_ic(packet_frequency, packet_width1, packet_width2)

    def op(jet, X):
        return np.zeros((X.shape[0], 1))

    return PdeProblem(
        name="fit_only",
        spatial_dim=3,
        components=1,
        operator=op,
        initial_condition=packet,
        final_time=0.0,
        jet_order=0,
    )


PROBLEM_BUILDERS = {
    "advection": advection_problem,
    "wave": wave_problem,
    "vlasov": vlasov_problem,
    "fokker_planck": fokker_planck_problem,
    "wave_maps": wave_maps_problem,
    "fit_only": fit_only_problem,
}
