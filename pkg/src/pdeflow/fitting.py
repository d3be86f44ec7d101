"""Nonlinear least-squares fitting of the network to target functions.

The pipeline is stochastic minibatch Adam followed by an exact ridge solve of
the last linear layer over fixed features ("head tuning").  The same routine
fits initial conditions and performs the restart refits that project the
parameters back to a well-conditioned region while preserving the function.
"""

from __future__ import annotations

import logging

import numpy as np

from . import linops, network
from .dynamics import SolverConfig
from .errors import ConfigError, NumericalError
from .network import NetworkSpec

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _eval_target(target, X: np.ndarray, k: int) -> np.ndarray:
    y = np.asarray(target(X), dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape != (X.shape[0], k):
        raise ConfigError(f"target returned shape {y.shape}, expected ({X.shape[0]}, {k})")
    return y


def _uniform_batch(rng, n: int, D: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, D))


def _mse(spec: NetworkSpec, theta: np.ndarray, target, X: np.ndarray) -> float:
    resid = network.forward(spec, theta, X) - _eval_target(target, X, spec.output_dim)
    return float(np.mean(resid**2))


def head_tune(
    spec: NetworkSpec,
    theta: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
) -> np.ndarray:
    """Replace the last layer by the exact ridge-regression solution.

    Features are the penultimate activations plus a constant column for the
    bias; an active boundary envelope is folded into the feature rows so the
    linear problem stays exact.  All other parameters are returned unchanged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    feats, env = network.penultimate_features(spec, theta, X)
    Phi = np.concatenate([feats, np.ones((X.shape[0], 1))], axis=1)
    if env is not None:
        Phi = Phi * env[:, None]
    W = linops.ridge_lstsq(Phi, y, lam)  # (h+1, k)
    out = theta.copy()
    sl = network.last_layer_slice(spec)
    h = feats.shape[1]
    out[sl] = np.concatenate([W[:h].T.ravel(), W[h]])
    return out


def fit_function(
    spec: NetworkSpec,
    target,
    cfg: SolverConfig,
    seed,
    theta_init: np.ndarray | None = None,
    metrics=None,
) -> np.ndarray:
    """Fit the network to a target function.

    Runs ``cfg.fit_iters`` Adam steps on fresh uniform minibatches of the
    mean squared error, then head-tunes on a large fixed batch, and returns
    whichever of the two parameter vectors has the lower MSE on a held-out
    evaluation batch.  ``metrics(iteration, mse)``, when given, is called
    every 100 iterations.
    """
    entropy = seed if isinstance(seed, (tuple, list)) else (int(seed),)
    ss = np.random.SeedSequence(entropy)
    init_ss, batch_ss, head_ss, eval_ss = ss.spawn(4)
    if theta_init is not None:
        theta = np.asarray(theta_init, dtype=np.float64).copy()
    else:
        theta = network.init_params(spec, init_ss)
    rng = np.random.default_rng(batch_ss)

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    k = spec.output_dim
    floor = cfg.fit_lr_decay
    for it in range(1, cfg.fit_iters + 1):
        X = _uniform_batch(rng, cfg.fit_batch, spec.input_dim)
        y = _eval_target(target, X, k)
        cache = network.forward_cache(spec, theta, X)
        resid = cache.out - y
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite fitting loss at iteration {it}", iteration=it)
        grad = network.param_vjp(spec, theta, 2.0 * resid / resid.size, X, cache=cache)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
        mhat = m / (1.0 - ADAM_BETA1**it)
        vhat = v / (1.0 - ADAM_BETA2**it)
        # cosine decay toward floor * fit_lr; floor = 1 keeps the rate constant
        lr = cfg.fit_lr * (0.5 * (1.0 + np.cos(np.pi * it / cfg.fit_iters)) * (1.0 - floor) + floor)
        theta = theta - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        if metrics is not None and (it % 100 == 0 or it == 1):
            metrics(it, loss)

    head_X = _uniform_batch(np.random.default_rng(head_ss), cfg.head_batch, spec.input_dim)
    tuned = head_tune(spec, theta, head_X, _eval_target(target, head_X, k), cfg.head_lambda)

    eval_X = _uniform_batch(np.random.default_rng(eval_ss), cfg.head_batch, spec.input_dim)
    mse_pre = _mse(spec, theta, target, eval_X)
    mse_post = _mse(spec, tuned, target, eval_X)
    if metrics is not None:
        metrics(cfg.fit_iters + 1, min(mse_pre, mse_post))
    return tuned if mse_post <= mse_pre else theta


def restart_refit(
    spec: NetworkSpec,
    theta_current: np.ndarray,
    cfg: SolverConfig,
    seed,
) -> tuple[np.ndarray, dict]:
    """Refit a freshly initialized network to the current network's outputs.

    Escaping an ill-conditioned parameter region only helps if the function
    is preserved, so the refit is accepted only when its evaluation-batch MSE
    and maximum absolute deviation both pass their gates; otherwise the
    current parameters are returned unchanged (bitwise) with a warning.
    """
    target = lambda X: network.forward(spec, theta_current, X)
    theta_new = fit_function(spec, target, cfg, seed)

    entropy = seed if isinstance(seed, (tuple, list)) else (int(seed),)
    eval_rng = np.random.default_rng(np.random.SeedSequence(tuple(entropy) + (0xD5,)))
    eval_X = _uniform_batch(eval_rng, 4096, spec.input_dim)
    delta = network.forward(spec, theta_new, eval_X) - network.forward(spec, theta_current, eval_X)
    refit_mse = float(np.mean(delta**2))
    max_dev = float(np.max(np.abs(delta)))
    accepted = refit_mse <= cfg.restart_mse_gate and max_dev <= cfg.restart_dev_gate
    info = {"accepted": accepted, "refit_mse": refit_mse, "max_deviation": max_dev}
    if not accepted:
        log.warning(
            "restart refit rejected (mse %.3e, max deviation %.3e); keeping current parameters",
            refit_mse,
            max_dev,
        )
        return theta_current.copy(), info
    return theta_new, info
