"""Fixed-step explicit Runge-Kutta steppers for the vehicle ODE."""

from __future__ import annotations

import numpy as np


class NonFiniteStateError(FloatingPointError):
    """A derivative evaluation returned NaN or inf."""


def _checked(k: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(k)):
        raise NonFiniteStateError("non-finite derivative during integration")
    return k


def bs3_step(f, t: float, y: np.ndarray, h: float) -> tuple[np.ndarray, float]:
    """One Bogacki-Shampine 3(2) step.

    Returns the third-order solution and the max-norm difference to the
    embedded second-order solution, which is only used for monitoring.
    """
    k1 = _checked(f(t, y))
    k2 = _checked(f(t + 0.5 * h, y + 0.5 * h * k1))
    k3 = _checked(f(t + 0.75 * h, y + 0.75 * h * k2))
    y_next = y + h * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3)
    k4 = _checked(f(t + h, y_next))
    err = h * (-5.0 / 72.0 * k1 + 1.0 / 12.0 * k2 + 1.0 / 9.0 * k3 - 1.0 / 8.0 * k4)
    return y_next, float(np.max(np.abs(err))) if err.size else 0.0


def rk4_step(f, t: float, y: np.ndarray, h: float) -> tuple[np.ndarray, float]:
    k1 = _checked(f(t, y))
    k2 = _checked(f(t + 0.5 * h, y + 0.5 * h * k1))
    k3 = _checked(f(t + 0.5 * h, y + 0.5 * h * k2))
    k4 = _checked(f(t + h, y + h * k3))
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), float("nan")


STEPPERS = {"bs3": bs3_step, "rk4": rk4_step}


def integrate_step(f, y, t: float, dt: float, method: str = "bs3") -> np.ndarray:
    """Advance ``y' = f(t, y)`` by one fixed step of size ``dt``."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    try:
        stepper = STEPPERS[method]
    except KeyError:
        raise ValueError(f"unknown integrator {method!r}; expected one of {sorted(STEPPERS)}") from None
    y_next, _ = stepper(f, t, np.asarray(y, dtype=float), dt)
    return y_next


def integrate_fixed(f, y0, t0: float, t1: float, dt: float, method: str = "bs3") -> np.ndarray:
    """March from ``t0`` to ``t1`` with ``round((t1 - t0)/dt)`` equal steps."""
    n = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / n
    y = np.asarray(y0, dtype=float)
    for i in range(n):
        y = integrate_step(f, y, t0 + i * h, h, method)
    return y
