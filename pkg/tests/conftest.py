"""Shared finite-difference oracles and helpers for the test suite.

The oracles here are deliberately independent of the library's analytic
differentiation paths: everything is built from repeated calls to
``network.forward`` (or to plain callables) with central differences.
"""

import numpy as np

from pdeflow import network


def rel_err(a, b, floor=1e-300):
    """Norm-relative discrepancy ||a - b|| / max(||b||, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), floor)


def fd_spatial_grad(spec, theta, x, h=1e-5):
    """Central-difference spatial gradient of the network, shape (k, D)."""
    D = spec.input_dim
    cols = []
    for i in range(D):
        e = np.zeros(D)
        e[i] = h
        cols.append((network.forward(spec, theta, x + e) - network.forward(spec, theta, x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_spatial_hess(spec, theta, x, h=1e-4):
    """Second-difference spatial Hessian of the network, shape (k, D, D).

    The default step is the roundoff-optimal choice for second differences
    (eps**0.25); smaller steps make the oracle itself noisier than the
    tolerances it is used to check.
    """
    D = spec.input_dim
    k = spec.output_dim
    f0 = network.forward(spec, theta, x)
    H = np.zeros((k, D, D))
    for i in range(D):
        ei = np.zeros(D)
        ei[i] = h
        H[:, i, i] = (
            network.forward(spec, theta, x + ei)
            - 2 * f0
            + network.forward(spec, theta, x - ei)
        ) / h**2
        for j in range(i + 1, D):
            ej = np.zeros(D)
            ej[j] = h
            mixed = (
                network.forward(spec, theta, x + ei + ej)
                - network.forward(spec, theta, x + ei - ej)
                - network.forward(spec, theta, x - ei + ej)
                + network.forward(spec, theta, x - ei - ej)
            ) / (4 * h**2)
            H[:, i, j] = mixed
            H[:, j, i] = mixed
    return H


def fd_param_jacobian(spec, theta, X, h=1e-6):
    """Dense parameter Jacobian by central differences, shape (n, k, p)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    p = spec.param_count
    n = X.shape[0]
    J = np.zeros((n, spec.output_dim, p))
    for j in range(p):
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        J[:, :, j] = (network.forward(spec, tp, X) - network.forward(spec, tm, X)) / (2 * h)
    return J


def random_small_spec(rng, order2=False):
    """Draw a small random architecture for oracle comparisons."""
    D = int(rng.integers(1, 4))
    k = int(rng.integers(1, 3))
    depth = int(rng.integers(0, 3))
    widths = tuple(int(rng.integers(2, 9)) for _ in range(depth))
    return network.NetworkSpec(
        input_dim=D,
        output_dim=k,
        hidden_widths=widths,
        embed_L=int(rng.integers(0, 3)),
        embed_alpha=float(rng.choice([0.0, 1.0])),
        embed_scale=float(rng.choice([1.0, 1.5])),
        activation=str(rng.choice(["swish", "tanh"])),
        envelope=str(rng.choice(["none", "dirichlet_cube"])),
    )
