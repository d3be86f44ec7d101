"""Embedded adaptive Runge-Kutta stepping.

One generic driver serves both the parameter-evolution loop and the grid
reference solver.  Two explicit pairs are provided: Dormand-Prince 5(4) and
Bogacki-Shampine 3(2).  Neither exploits the first-same-as-last property:
the right-hand side may be stochastic (fresh sample batch per evaluation),
which makes stage reuse across steps meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class Tableau:
    name: str
    c: tuple
    a: tuple  # lower-triangular stage rows
    b_high: tuple  # propagated solution weights
    b_low: tuple  # embedded (error-estimate) solution weights
    err_exponent: float  # step-size controller exponent


DORMAND_PRINCE_45 = Tableau(
    name="rk45",
    c=(0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0),
    a=(
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    ),
    b_high=(35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0),
    b_low=(5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40),
    err_exponent=0.2,
)

BOGACKI_SHAMPINE_23 = Tableau(
    name="rk23",
    c=(0.0, 1 / 2, 3 / 4, 1.0),
    a=(
        (),
        (1 / 2,),
        (0.0, 3 / 4),
        (2 / 9, 1 / 3, 4 / 9),
    ),
    b_high=(2 / 9, 1 / 3, 4 / 9, 0.0),
    b_low=(7 / 24, 1 / 4, 1 / 3, 1 / 8),
    err_exponent=1 / 3,
)

TABLEAUS = {"rk45": DORMAND_PRINCE_45, "rk23": BOGACKI_SHAMPINE_23}


def attempt_step(rhs: Callable, t: float, y: np.ndarray, dt: float, tableau: Tableau):
    """One trial step: returns (y_new, err_vec, k_stages)."""
    k = []
    for i, (ci, row) in enumerate(zip(tableau.c, tableau.a)):
        yi = y
        if row:
            incr = sum(aij * kj for aij, kj in zip(row, k) if aij != 0.0)
            yi = y + dt * incr
        k.append(rhs(t + ci * dt, yi))
    y_new = y + dt * sum(b * kj for b, kj in zip(tableau.b_high, k) if b != 0.0)
    err = dt * sum(
        (bh - bl) * kj
        for bh, bl, kj in zip(tableau.b_high, tableau.b_low, k)
        if bh != bl
    )
    return y_new, err


def _error_ratio(err, y, y_new, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def integrate_adaptive(
    rhs: Callable,
    y0: np.ndarray,
    t0: float,
    t_end: float,
    dt0: float,
    tableau: Tableau,
    atol: float,
    rtol: float,
    stop_times=(),
    on_step: Callable | None = None,
    on_stop: Callable | None = None,
    on_attempt: Callable | None = None,
    safety: float = 0.9,
    min_factor: float = 0.2,
    max_factor: float = 5.0,
    dt_floor_rel: float = 1e-12,
) -> tuple[float, np.ndarray]:
    """Drive an embedded pair from t0 to t_end with error control in max-norm.

    The step error is accepted when max_i |e_i| / (atol + rtol max(|y_i|,
    |y_new_i|)) <= 1.  ``stop_times`` are landed on exactly; after landing,
    ``on_stop(t, y)`` may return a replacement state (restart hook).
    ``on_step(t, y, dt)`` fires after every accepted step; ``on_attempt()``
    fires before every trial step, accepted or not, letting a stochastic
    right-hand side freeze its sample batch across the stages of one attempt.
    The controller step collapsing below ``dt_floor_rel`` times the horizon
    is fatal.
    """
    if dt0 <= 0:
        raise ConfigError("initial step must be positive")
    horizon = t_end - t0
    if horizon <= 0:
        raise ConfigError("t_end must exceed t0")
    stops = [float(s) for s in sorted(stop_times) if t0 < s <= t_end]
    if not stops or stops[-1] < t_end:
        stops.append(t_end)

    t = float(t0)
    y = np.asarray(y0, dtype=np.float64).copy()
    dt_free = float(dt0)
    floor = dt_floor_rel * horizon
    next_stop = stops.pop(0)

    while t < t_end - 1e-14 * horizon:
        if dt_free < floor:
            raise NumericalError("step-size collapse", t=t, dt=dt_free)
        clipped = t + dt_free >= next_stop - 1e-14 * horizon
        dt = min(dt_free, next_stop - t) if clipped else dt_free
        if on_attempt is not None:
            on_attempt()
        y_new, err = attempt_step(rhs, t, y, dt, tableau)
        if not np.all(np.isfinite(y_new)):
            raise NumericalError("non-finite state produced by a step", t=t, dt=dt)
        ratio = _error_ratio(err, y, y_new, atol, rtol)
        if ratio <= 1.0:
            t = next_stop if clipped else t + dt
            y = y_new
            if on_step is not None:
                on_step(t, y, dt)
            factor = safety * ratio ** -tableau.err_exponent if ratio > 0 else max_factor
            factor = min(max(factor, min_factor), max_factor)
            if clipped:
                dt_free = max(dt_free, dt * factor)
            else:
                dt_free = dt * factor
            if clipped and abs(t - next_stop) <= 1e-12 * max(1.0, abs(next_stop)):
                if on_stop is not None:
                    replacement = on_stop(t, y)
                    if replacement is not None:
                        y = np.asarray(replacement, dtype=np.float64).copy()
                if stops:
                    next_stop = stops.pop(0)
        else:
            factor = max(safety * ratio ** -tableau.err_exponent, min_factor)
            dt_free = dt * factor
    return t, y
