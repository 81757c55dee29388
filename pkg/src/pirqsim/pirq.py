"""PIRQ (proportional-integral-ramp-quadratic) compensator.

``C(s) = (kP s^3 + kI s^2 + kR s + kQ) / s^3``. The triple integrator is an
internal model of a disturbance growing like ``t**2``, which is what quadratic
drag looks like during a constant-acceleration fall.

Conventions: ``v`` is the vertical speed, positive when descending, and
``a_d > 0`` is the desired downward acceleration. The actuator maps its input
``u_p`` to the thrusting acceleration ``a_p`` (also positive down) and must have
unit DC gain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from pirqsim.lti import LtiSystem, dc_gain, is_minimum_phase, is_stable


class LoopNotStabilizedError(ValueError):
    """The requested zeros and kP leave a closed-loop pole with Re >= 0."""

    def __init__(self, abscissa: float):
        super().__init__(
            f"loop not stabilized: closed-loop spectral abscissa {abscissa:.6g} >= 0; "
            "adjust kP or the zero locations"
        )
        self.abscissa = abscissa


@dataclass(frozen=True)
class PirqGains:
    kP: float
    kI: float
    kR: float
    kQ: float

    def __post_init__(self):
        for name in ("kP", "kI", "kR", "kQ"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PIRQ gain {name} must be strictly positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.kP, self.kI, self.kR, self.kQ)


@dataclass(frozen=True, eq=False)
class InversionCoefficients:
    """Polynomial actuator input/state that produce a quadratic output.

    ``u(t) = u0 + u1 t + u2 t^2/2`` and ``x(t) = x0 + x1 t + x2 t^2/2``.
    """

    u0: float
    u1: float
    u2: float
    x0: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def input_at(self, t):
        t = np.asarray(t, dtype=float)
        return self.u0 + self.u1 * t + self.u2 * t**2 / 2

    def state_at(self, t: float) -> np.ndarray:
        return self.x0 + self.x1 * t + self.x2 * t**2 / 2


@dataclass(frozen=True)
class ControllerIC:
    q0: float
    r0: float
    s0: float

    @property
    def state(self) -> np.ndarray:
        return np.array([self.q0, self.r0, self.s0])

    def state_at(self, t: float) -> np.ndarray:
        """Zero-input trajectory of the integrator chain."""
        return np.array(
            [
                self.q0 + self.r0 * t + self.s0 * t**2 / 2,
                self.r0 + self.s0 * t,
                self.s0,
            ]
        )


def pirq_realization(gains: PirqGains) -> LtiSystem:
    """Upper-shift realization: states ``(q, r, s)`` with ``q' = r``, ``r' = s``, ``s' = u``."""
    A = np.diag([1.0, 1.0], k=1)
    b = np.array([0.0, 0.0, 1.0])
    c = np.array([gains.kQ, gains.kR, gains.kI])
    return LtiSystem(A, b, c, gains.kP)


class ClosedLoop(NamedTuple):
    """Actuator/controller/sensor interconnection ``x' = A x + ref_input (a_d - g) + drag_input b v^2``."""

    A: np.ndarray
    ref_input: np.ndarray
    drag_input: np.ndarray
    cbar: np.ndarray
    n_p: int
    n_c: int
    n_a: int

    def blocks(self, x):
        x = np.asarray(x)
        return x[: self.n_p], x[self.n_p : self.n_p + self.n_c], x[self.n_p + self.n_c :]


def closed_loop_matrix(plant: LtiSystem, controller: LtiSystem, sensor: LtiSystem) -> ClosedLoop:
    """Assemble the loop where the controller acts on ``(a_d - g) - y_a``.

    Row blocks, in order actuator / controller / sensor::

        [ A_p      b_p c_c   -b_p d_c c_a ]
        [ 0        A_c       -b_c c_a     ]
        [ b_a c_p  0          A_a         ]
    """
    n_p, n_c, n_a = plant.n, controller.n, sensor.n
    n = n_p + n_c + n_a
    P = slice(0, n_p)
    C = slice(n_p, n_p + n_c)
    S = slice(n_p + n_c, n)
    A = np.zeros((n, n))
    A[P, P] = plant.A
    A[P, C] = np.outer(plant.b, controller.c)
    A[P, S] = -controller.d * np.outer(plant.b, sensor.c)
    A[C, C] = controller.A
    A[C, S] = -np.outer(controller.b, sensor.c)
    A[S, P] = np.outer(sensor.b, plant.c)
    A[S, S] = sensor.A
    ref = np.concatenate([plant.b * controller.d, controller.b, np.zeros(n_a)])
    drag = np.concatenate([np.zeros(n_p + n_c), -sensor.b])
    cbar = np.concatenate([plant.c, np.zeros(n_c + n_a)])
    return ClosedLoop(A, ref, drag, cbar, n_p, n_c, n_a)


def stabilizing_gains(zeros, kP: float, plant: LtiSystem, sensor: LtiSystem) -> PirqGains:
    """Gains whose compensator zeros sit at ``zeros`` with overall gain ``kP``.

    The numerator ``kP (s - z1)(s - z2)(s - z3)`` is expanded; the result is
    checked against the closed loop built with ``plant`` and ``sensor``.
    """
    zeros = np.asarray(zeros, dtype=complex)
    if zeros.shape != (3,):
        raise ValueError("exactly three compensator zeros are required")
    if np.any(zeros.real >= 0):
        raise ValueError("compensator zeros must lie in the open left half plane")
    if not np.allclose(np.sort_complex(zeros), np.sort_complex(zeros.conj()), rtol=1e-12, atol=0):
        raise ValueError("complex zeros must come in conjugate pairs")
    if not (is_stable(plant) and is_minimum_phase(plant)):
        raise ValueError("actuator model must be stable and minimum phase")
    if not (is_stable(sensor) and is_minimum_phase(sensor)):
        raise ValueError("sensor model must be stable and minimum phase")
    _, kI, kR, kQ = kP * np.real(np.poly(zeros))
    gains = PirqGains(float(kP), float(kI), float(kR), float(kQ))
    loop = closed_loop_matrix(plant, pirq_realization(gains), sensor)
    abscissa = float(np.max(np.linalg.eigvals(loop.A).real))
    if abscissa >= 0:
        raise LoopNotStabilizedError(abscissa)
    return gains


def inversion_coefficients(plant: LtiSystem, b: float, a_d: float, g: float) -> InversionCoefficients:
    """Actuator input and state trajectories whose output is ``b a_d^2 t^2 + a_d - g``.

    This is the drag-compensating feedforward for a fall ``v = a_d t``.
    """
    A, bp, cp = plant.A, plant.b, plant.c
    if plant.d != 0.0:
        raise ValueError("actuator model must be strictly proper")
    gain = dc_gain(plant)
    if abs(gain - 1.0) > 1e-9:
        raise ValueError(f"actuator DC gain must be 1, got {gain:.12g}")
    m1 = np.linalg.solve(A, bp)  # A^-1 b
    m2 = np.linalg.solve(A, m1)  # A^-2 b
    m3 = np.linalg.solve(A, m2)  # A^-3 b
    h2 = float(cp @ m2)
    h3 = float(cp @ m3)
    k = 2.0 * b * a_d**2
    u2 = k
    x2 = -k * m1
    u1 = k * h2
    x1 = -k * (m2 + h2 * m1)
    u0 = k * (h3 + h2**2) + a_d - g
    x0 = -k * (m3 + h2 * m2 + (h3 + h2**2) * m1) - m1 * (a_d - g)
    return InversionCoefficients(u0, u1, u2, x0, x1, x2)


def controller_initial_condition(gains: PirqGains, coeffs: InversionCoefficients) -> ControllerIC:
    """Integrator state from which the unforced PIRQ emits ``coeffs.input_at(t)``."""
    kI, kR, kQ = gains.kI, gains.kR, gains.kQ
    u0, u1, u2 = coeffs.u0, coeffs.u1, coeffs.u2
    s0 = u2 / kQ
    r0 = (u1 - kR / kQ * u2) / kQ
    q0 = (u0 - kR / kQ * u1 + (kR**2 - kI * kQ) / kQ**2 * u2) / kQ
    return ControllerIC(q0, r0, s0)


class PirqController:
    """Sampled PIRQ with exact propagation of the integrator chain.

    The error is held over each control period, so the chain advances by the
    closed-form cubic in ``dt`` with no discretization error.
    """

    def __init__(self, gains: PirqGains, state=None):
        self.gains = gains
        self._c = np.array([gains.kQ, gains.kR, gains.kI])
        self.state = np.zeros(3) if state is None else np.array(state, dtype=float)

    def output(self, error: float) -> float:
        return float(self._c @ self.state) + self.gains.kP * error

    def advance(self, error: float, dt: float) -> None:
        q, r, s = self.state
        self.state = np.array(
            [
                q + r * dt + s * dt**2 / 2 + error * dt**3 / 6,
                r + s * dt + error * dt**2 / 2,
                s + error * dt,
            ]
        )

    def step(self, error: float, dt: float) -> float:
        """Return the output for this sample, then advance the chain."""
        y = self.output(error)
        self.advance(error, dt)
        return y
