"""Grid-based finite-difference oracle for the 3D wave equation.

Method of lines on a uniform grid over [-1, 1]^3 with the standard 7-point
Laplacian, zero Dirichlet boundary, and the same adaptive Runge-Kutta driver
the parameter dynamics use.  Serves as the cross-validation baseline for
network solutions of the flat wave equation.
"""

from __future__ import annotations

import numpy as np

from . import network
from .dynamics import Trajectory
from .errors import ConfigError
from .integrate import DORMAND_PRINCE_45, integrate_adaptive
from .network import NetworkSpec

DEFAULT_MEMORY_CAP = 2 * 1024**3  # bytes


def grid_axes(grid_n: int) -> np.ndarray:
    """Grid coordinates per axis, boundary included."""
    return np.linspace(-1.0, 1.0, grid_n)


def grid_points(grid_n: int) -> np.ndarray:
    """All grid points as an (grid_n^3, 3) array, x fastest in memory layout."""
    ax = grid_axes(grid_n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def _laplacian_interior(phi: np.ndarray, h: float) -> np.ndarray:
    """7-point Laplacian of the interior field with zero Dirichlet padding."""
    padded = np.pad(phi, 1)
    out = -6.0 * phi
    out += padded[2:, 1:-1, 1:-1]
    out += padded[:-2, 1:-1, 1:-1]
    out += padded[1:-1, 2:, 1:-1]
    out += padded[1:-1, :-2, 1:-1]
    out += padded[1:-1, 1:-1, 2:]
    out += padded[1:-1, 1:-1, :-2]
    out /= h * h
    return out


def fd_wave_solve(
    grid_n: int,
    T: float,
    ic,
    ode_tol: float = 1e-4,
    checkpoint_times=None,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> list[tuple[float, np.ndarray]]:
    """Solve phi_tt = lap(phi) on the grid; returns (t, full-grid phi) pairs.

    ``ic`` is a pair (phi0, psi0) of callables over point batches.  The
    boundary is pinned to zero throughout.  Snapshots are produced at the
    requested checkpoint times plus T.
    """
    if grid_n < 8:
        raise ConfigError("grid_n must be >= 8")
    if T <= 0:
        raise ConfigError("T must be positive")
    m = grid_n - 2
    state_bytes = 2 * m**3 * 8
    # RK45 keeps ~7 stage arrays plus the state, trial state and error
    estimate = state_bytes * (len(DORMAND_PRINCE_45.c) + 4)
    if estimate > memory_cap:
        raise ConfigError(
            f"estimated working set {estimate / 1e9:.1f} GB exceeds the memory cap "
            f"({memory_cap / 1e9:.1f} GB); grids this large run out of memory"
        )
    checkpoints = sorted({float(t) for t in (checkpoint_times or [])} | {float(T)})
    if any(t <= 0 or t > T for t in checkpoints):
        raise ConfigError("checkpoint times must lie in (0, T]")

    ax = grid_axes(grid_n)
    h = ax[1] - ax[0]
    interior = ax[1:-1]
    X, Y, Z = np.meshgrid(interior, interior, interior, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    phi0_fn, psi0_fn = ic
    phi0 = np.asarray(phi0_fn(pts), dtype=np.float64).reshape(m, m, m)
    psi0 = np.asarray(psi0_fn(pts), dtype=np.float64).reshape(m, m, m)

    y0 = np.concatenate([phi0.ravel(), psi0.ravel()])
    size = m**3

    def rhs(t, y):
        phi = y[:size].reshape(m, m, m)
        psi = y[size:]
        return np.concatenate([psi, _laplacian_interior(phi, h).ravel()])

    snapshots = []

    def on_stop(t, y):
        full = np.zeros((grid_n, grid_n, grid_n))
        full[1:-1, 1:-1, 1:-1] = y[:size].reshape(m, m, m)
        snapshots.append((t, full))
        return None

    integrate_adaptive(
        rhs,
        y0,
        0.0,
        T,
        dt0=min(0.25 * h, T / 10),
        tableau=DORMAND_PRINCE_45,
        atol=ode_tol,
        rtol=ode_tol,
        stop_times=checkpoints,
        on_stop=on_stop,
    )
    return snapshots


def discrete_energy(full_field_phi: np.ndarray, full_field_psi: np.ndarray, h: float) -> float:
    """Sum of psi^2 + |forward-difference grad(phi)|^2 over the grid, times h^3."""
    e = np.sum(full_field_psi**2)
    for axis in range(3):
        diff = np.diff(full_field_phi, axis=axis) / h
        e += np.sum(diff**2)
    return float(e * h**3)


def evaluate_network_on_grid(
    spec: NetworkSpec, theta: np.ndarray, pts: np.ndarray, component: int = 0, chunk: int = 65536
) -> np.ndarray:
    """First-component network values over many points, evaluated in chunks."""
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        stop = min(start + chunk, pts.shape[0])
        out[start:stop] = network.forward(spec, theta, pts[start:stop])[:, component]
    return out


def grid_compare(
    traj: Trajectory,
    spec: NetworkSpec,
    fd_snapshot: np.ndarray,
    t: float,
    slice_spec: tuple[int, float] | None = None,
    time_tol: float = 1e-9,
) -> tuple[float, np.ndarray]:
    """Relative L2 discrepancy between a trajectory checkpoint and an FD field.

    ``slice_spec = (axis, value)`` restricts the comparison to the grid plane
    nearest ``value`` along ``axis`` (and returns that network field);
    without it the full grid is compared.  The trajectory must contain a
    checkpoint at ``t``.
    """
    matches = [i for i, ti in enumerate(traj.times) if abs(ti - t) <= time_tol * max(1.0, abs(t))]
    if not matches:
        raise ConfigError(f"no trajectory checkpoint at t={t}; have {traj.times}")
    theta = traj.thetas[matches[0]]
    grid_n = fd_snapshot.shape[0]
    ax = grid_axes(grid_n)

    if slice_spec is None:
        pts = grid_points(grid_n)
        net_field = evaluate_network_on_grid(spec, theta, pts).reshape(fd_snapshot.shape)
        ref = fd_snapshot
    else:
        axis, value = slice_spec
        if not 0 <= axis <= 2:
            raise ConfigError("slice axis must be 0, 1 or 2")
        idx = int(np.argmin(np.abs(ax - value)))
        others = [a for a in range(3) if a != axis]
        A, B = np.meshgrid(ax, ax, indexing="ij")
        pts = np.empty((grid_n * grid_n, 3))
        pts[:, axis] = ax[idx]
        pts[:, others[0]] = A.ravel()
        pts[:, others[1]] = B.ravel()
        net_field = evaluate_network_on_grid(spec, theta, pts).reshape(grid_n, grid_n)
        ref = np.take(fd_snapshot, idx, axis=axis)

    denom = np.linalg.norm(ref)
    if denom == 0.0:
        raise ConfigError("reference field is identically zero on the comparison set")
    return float(np.linalg.norm(net_field - ref) / denom), net_field
