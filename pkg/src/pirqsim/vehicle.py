"""Rigid-body dynamics of the variable-pitch quadrotor.

Frames: inertial axes are north-east-down (flat Earth), so altitude is
``-position[2]``. Body axes are forward-right-down. The attitude quaternion is
scalar-first and rotates body vectors into the inertial frame.

Forces passed to :func:`translational_derivatives` are the non-gravitational
ones (propulsion plus aerodynamics); gravity enters through the ``g`` terms of
the Newton-Euler equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STANDARD_GRAVITY = 9.807
AIR_DENSITY = 1.225


def _default_thrust_coeffs(m: float, g: float, delta_max: float, ratio: float = 2.0, linear_share: float = 0.7):
    # odd cubic c1*x + c3*x^3 peaking at ratio*m*g on the envelope edge
    t_max = ratio * m * g
    return (linear_share * t_max / delta_max, (1.0 - linear_share) * t_max / delta_max**3)


@dataclass(frozen=True)
class VehicleParams:
    """Mass properties, drag and propulsion of the test vehicle.

    ``drag_b`` has units 1/m so that ``drag_b * v**2`` is an acceleration.
    ``thrust_coeffs`` are ``(c1, c3)`` of the collective static thrust curve
    ``T(delta) = c1*delta + c3*delta**3`` (N, delta in rad) for all four rotors
    together at the governed rotor speed.
    """

    m: float = 1.265
    Ixx: float = 0.0068
    Iyy: float = 0.0171
    Izz: float = 0.0207
    g: float = STANDARD_GRAVITY
    drag_b: float = 0.05
    delta_max: float = 0.09
    thrust_coeffs: tuple[float, float] | None = None
    arm_length: float = 0.25
    yaw_torque_coeff: float = 0.02
    drag_cd: float | None = None
    planform_area: float | None = None
    inflow_derate: float = 0.0
    pwm_neutral: float = 1500.0
    pwm_per_rad: float = 5000.0
    _coeffs: tuple[float, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m <= 0 or min(self.Ixx, self.Iyy, self.Izz) <= 0:
            raise ValueError("mass and principal inertias must be positive")
        if self.drag_b < 0:
            raise ValueError("drag coefficient must be non-negative")
        if self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        coeffs = self.thrust_coeffs
        if coeffs is None:
            coeffs = _default_thrust_coeffs(self.m, self.g, self.delta_max)
        c1, c3 = (float(v) for v in coeffs)
        if c1 < 0 or c3 < 0 or (c1 == 0 and c3 == 0):
            raise ValueError("thrust curve must be monotone increasing (c1, c3 >= 0)")
        object.__setattr__(self, "_coeffs", (c1, c3))
        if self.max_thrust < self.m * self.g:
            raise ValueError(
                f"max thrust {self.max_thrust:.3f} N cannot hold weight {self.m * self.g:.3f} N"
            )

    @property
    def coeffs(self) -> tuple[float, float]:
        return self._coeffs

    @property
    def inertia(self) -> np.ndarray:
        return np.array([self.Ixx, self.Iyy, self.Izz])

    @property
    def max_thrust(self) -> float:
        c1, c3 = self._coeffs
        return c1 * self.delta_max + c3 * self.delta_max**3

    @property
    def horizontal_drag_b(self) -> float:
        if self.drag_cd is not None and self.planform_area is not None:
            return 0.5 * AIR_DENSITY * self.drag_cd * self.planform_area / self.m
        return self.drag_b

    def pwm_from_deflection(self, delta: float) -> float:
        """Affine servo map, kept for traceability to bench data."""
        return self.pwm_neutral + self.pwm_per_rad * delta


@dataclass
class RigidBodyState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rates: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.quaternion, self.velocity, self.rates]).astype(float)

    @classmethod
    def from_vector(cls, x) -> "RigidBodyState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy())

    @property
    def altitude(self) -> float:
        return -float(self.position[2])


def rotation_matrix(q) -> np.ndarray:
    """Body-to-inertial direction cosine matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def euler_angles(q) -> tuple[float, float, float]:
    """Roll, pitch, yaw (rad) of a scalar-first quaternion, 3-2-1 sequence."""
    w, x, y, z = q
    phi = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    theta = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
    psi = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return phi, theta, psi


def quaternion_from_euler(phi: float, theta: float, psi: float) -> np.ndarray:
    cr, sr = math.cos(phi / 2), math.sin(phi / 2)
    cp, sp = math.cos(theta / 2), math.sin(theta / 2)
    cy, sy = math.cos(psi / 2), math.sin(psi / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


def gravity_body(q, g: float) -> np.ndarray:
    """Gravity acceleration resolved in body axes.

    Equals ``g * (-sin(theta), sin(phi) cos(theta), cos(phi) cos(theta))`` but
    is computed from the quaternion directly, so it stays valid at
    ``theta = +-90 deg``.
    """
    w, x, y, z = q
    return g * np.array([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)])


def translational_derivatives(state: RigidBodyState, F, params: VehicleParams) -> np.ndarray:
    u, v, w = state.velocity
    p, q, r = state.rates
    F = np.asarray(F, dtype=float)
    coriolis = np.array([v * r - w * q, w * p - u * r, u * q - v * p])
    return coriolis + gravity_body(state.quaternion, params.g) + F / params.m


def rotational_derivatives(state: RigidBodyState, M, params: VehicleParams) -> np.ndarray:
    p, q, r = state.rates
    Mx, My, Mz = np.asarray(M, dtype=float)
    Ixx, Iyy, Izz = params.Ixx, params.Iyy, params.Izz
    return np.array(
        [
            q * r * (Iyy - Izz) / Ixx + Mx / Ixx,
            p * r * (Izz - Ixx) / Iyy + My / Iyy,
            p * q * (Ixx - Iyy) / Izz + Mz / Izz,
        ]
    )


def quaternion_derivative(q, omega) -> np.ndarray:
    """``q' = 0.5 * q (x) (0, omega)``; orthogonal to ``q`` for any rates."""
    w, x, y, z = q
    p, qr, r = omega
    return 0.5 * np.array(
        [
            -x * p - y * qr - z * r,
            w * p + y * r - z * qr,
            w * qr - x * r + z * p,
            w * r + x * qr - y * p,
        ]
    )


def drag_acceleration(v, b: float):
    """Quadratic drag ``-b v |v|``; always opposes the motion."""
    return -b * v * np.abs(v)


def thrust_from_deflection(delta: float, params: VehicleParams) -> tuple[float, bool]:
    """Collective static thrust (N) at blade deflection ``delta`` (rad).

    Out-of-envelope commands are clamped to ``+-delta_max``; the second return
    value flags that clamping happened.
    """
    saturated = abs(delta) > params.delta_max
    if saturated:
        delta = math.copysign(params.delta_max, delta)
    c1, c3 = params.coeffs
    return c1 * delta + c3 * delta**3, saturated


def deflection_from_thrust(thrust: float, params: VehicleParams) -> tuple[float, bool]:
    """Inverse of the static thrust curve, clamped to the deflection envelope."""
    t_max = params.max_thrust
    if abs(thrust) >= t_max:
        return math.copysign(params.delta_max, thrust), abs(thrust) > t_max
    c1, c3 = params.coeffs
    target = abs(thrust)
    # target/c1 lies above the root of this convex curve, so Newton descends monotonically
    delta = target / c1 if c1 > 0 else (target / c3) ** (1.0 / 3.0)
    delta = min(delta, params.delta_max)
    for _ in range(30):
        f = c1 * delta + c3 * delta**3 - target
        step = f / (c1 + 3 * c3 * delta * delta)
        delta -= step
        if abs(step) < 1e-15:
            break
    return math.copysign(delta, thrust), False


def inflow_corrected_thrust(thrust: float, w_body: float, params: VehicleParams) -> float:
    """Linear vertical-inflow derate; climbing (``w < 0``) reduces thrust."""
    return thrust * (1.0 + params.inflow_derate * w_body)


def bifilar_inertia(m: float, g: float, d: float, T: float, L: float) -> float:
    """Moment of inertia from a bifilar (two-wire torsional) pendulum test.

    Parameters
    ----------
    m : mass of the suspended body, kg
    g : gravitational acceleration, m/s^2
    d : distance between the two wires, m
    T : measured oscillation period, s
    L : wire length, m
    """
    for name, val in (("m", m), ("g", g), ("d", d), ("T", T), ("L", L)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return m * g * d**2 * T**2 / (16.0 * L * math.pi**2)


def rigid_body_derivatives(x, F, M, params: VehicleParams) -> np.ndarray:
    """Time derivative of the 13-element packed state."""
    state = RigidBodyState.from_vector(x)
    R = rotation_matrix(state.quaternion)
    return np.concatenate(
        [
            R @ state.velocity,
            quaternion_derivative(state.quaternion, state.rates),
            translational_derivatives(state, F, params),
            rotational_derivatives(state, M, params),
        ]
    )


def normalize_quaternion(x: np.ndarray) -> np.ndarray:
    """Renormalize the quaternion slot of a packed state in place."""
    x[3:7] /= np.linalg.norm(x[3:7])
    return x


def mechanical_energy(x, params: VehicleParams) -> float:
    """Kinetic plus potential energy (J) of a packed state."""
    state = RigidBodyState.from_vector(x)
    kinetic = 0.5 * params.m * float(state.velocity @ state.velocity)
    rotational = 0.5 * float(params.inertia @ state.rates**2)
    return kinetic + rotational + params.m * params.g * state.altitude
