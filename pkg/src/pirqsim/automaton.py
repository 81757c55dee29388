"""Autonomous maneuver logic: hover, ascend, track, recover, land.

The vertical speed ``v_vert`` is positive when descending. Accelerometer
readings are in G, i.e. specific force divided by ``-9.807 m/s^2``, so a
vehicle at rest reads 1.0 and one in free fall reads 0.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pirqsim.pirq import PirqController
from pirqsim.vehicle import STANDARD_GRAVITY, VehicleParams, deflection_from_thrust

G0 = STANDARD_GRAVITY


class ManeuverPhase(Enum):
    HOVER = "Hover"
    ASCEND = "Ascend"
    TRACK = "Track"
    RECOVER = "Recover"
    LAND = "Land"
    FAULT = "Fault"


NOMINAL_SEQUENCE = (
    ManeuverPhase.HOVER,
    ManeuverPhase.ASCEND,
    ManeuverPhase.TRACK,
    ManeuverPhase.RECOVER,
    ManeuverPhase.LAND,
)


@dataclass(frozen=True)
class AutomatonConfig:
    """Thresholds and gains of the maneuver logic.

    ``a_d`` is the downward acceleration of the fall (m/s^2) and ``target_g``
    the accelerometer reading that goes with it.
    """

    a_d: float = G0 * (1 - 0.378)
    target_g: float = 0.378
    hover_alt: float = 2.0
    alt_error_threshold: float = 0.1
    dwell_time: float = 2.0
    ceiling: float = 60.0
    switch_margin: float = 5.0
    critical_recovery_alt: float = 8.0
    recovery_decel: float = G0
    shaping_tau: float = 0.25
    loop_rate: float = 333.0
    recover_speed: float = 0.2
    alt_gain: float = 1.0
    speed_gain: float = 6.0
    max_climb: float = 3.0
    max_descent: float = 1.5
    alt_sensor_range: tuple[float, float] = (-0.5, 150.0)
    accel_sensor_range_g: float = 16.0

    def __post_init__(self):
        if not self.ceiling > self.hover_alt > 0:
            raise ValueError("need ceiling > hover_alt > 0")
        if self.ceiling > 120.0:
            raise ValueError("ceiling above the 120 m (400 ft) limit")
        if not self.critical_recovery_alt > 0:
            raise ValueError("critical_recovery_alt must be positive")
        if not self.loop_rate > 0:
            raise ValueError("loop_rate must be positive")
        if not self.a_d > 0:
            raise ValueError("the fall acceleration a_d must be positive")
        if not self.shaping_tau > 0:
            raise ValueError("shaping_tau must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.loop_rate


@dataclass
class Measurements:
    alt: float
    v_vert: float
    accel: float
    saturated: bool = False
    dwell: float = 0.0
    phase_time: float = 0.0

    def finite(self) -> bool:
        return all(math.isfinite(x) for x in (self.alt, self.v_vert, self.accel))


def sensor_fault(meas: Measurements, config: AutomatonConfig) -> bool:
    if not meas.finite():
        return True
    lo, hi = config.alt_sensor_range
    return not (lo <= meas.alt <= hi) or abs(meas.accel) > config.accel_sensor_range_g


def ascend_to_track_switch(alt: float, v_vert: float, config: AutomatonConfig) -> bool:
    """True once the apogee reached by decelerating at ``a_d`` hits the ceiling minus margin."""
    climb = max(-v_vert, 0.0)
    apogee = alt + climb**2 / (2.0 * config.a_d)
    return apogee >= config.ceiling - config.switch_margin


def can_recover(alt: float, v_vert: float, config: AutomatonConfig) -> bool:
    """Whether braking at ``recovery_decel`` stops the fall above the critical altitude."""
    stop = v_vert**2 / (2.0 * config.recovery_decel) if v_vert > 0 else 0.0
    return alt - stop > config.critical_recovery_alt


def transition(phase: ManeuverPhase, meas: Measurements, config: AutomatonConfig) -> ManeuverPhase:
    if phase is ManeuverPhase.FAULT or sensor_fault(meas, config):
        return ManeuverPhase.FAULT
    if phase is ManeuverPhase.HOVER:
        if meas.dwell >= config.dwell_time:
            return ManeuverPhase.ASCEND
    elif phase is ManeuverPhase.ASCEND:
        if ascend_to_track_switch(meas.alt, meas.v_vert, config):
            return ManeuverPhase.TRACK
    elif phase is ManeuverPhase.TRACK:
        if meas.saturated or not can_recover(meas.alt, meas.v_vert, config):
            return ManeuverPhase.RECOVER
    elif phase is ManeuverPhase.RECOVER:
        if abs(meas.v_vert) < config.recover_speed:
            return ManeuverPhase.LAND
    return phase


class Automaton:
    """Stateful wrapper that keeps the dwell and phase timers for :func:`transition`."""

    def __init__(self, config: AutomatonConfig, phase: ManeuverPhase = ManeuverPhase.HOVER):
        self.config = config
        self.phase = phase
        self.dwell = 0.0
        self.phase_time = 0.0
        self.events: list[tuple[float, ManeuverPhase]] = []

    def update(self, t: float, alt: float, v_vert: float, accel: float, saturated: bool = False) -> ManeuverPhase:
        dt = self.config.dt
        if not self.events:
            self.events.append((t, self.phase))
        if self.phase is ManeuverPhase.HOVER and abs(alt - self.config.hover_alt) < self.config.alt_error_threshold:
            self.dwell += dt
        else:
            self.dwell = 0.0
        meas = Measurements(alt, v_vert, accel, saturated, self.dwell, self.phase_time)
        new = transition(self.phase, meas, self.config)
        if new is not self.phase:
            self.phase = new
            self.phase_time = 0.0
            self.dwell = 0.0
            self.events.append((t, new))
        else:
            self.phase_time += dt
        return self.phase


def input_shaper(a_meas0: float, a_d: float, tau: float, t: float) -> float:
    """Unit-DC-gain first-order transition from ``a_meas0`` to ``a_d``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return a_d + (a_meas0 - a_d) * math.exp(-t / tau)


def collective_for_thrust(thrust: float, params: VehicleParams) -> tuple[float, bool]:
    return deflection_from_thrust(thrust, params)


def altitude_controller(
    alt: float,
    alt_ref: float,
    v_vert: float,
    config: AutomatonConfig,
    params: VehicleParams,
    tilt: float = 1.0,
) -> tuple[float, bool, float]:
    """Cascaded altitude/climb-rate law for Hover and Land.

    Returns ``(deflection, saturated, thrust)``. The outer loop commands a
    climb rate proportional to the altitude error, clipped to
    ``[-max_descent, max_climb]``; the inner loop turns the rate error into an
    acceleration on top of the hover trim. With ``speed_gain >= 4 alt_gain``
    the altitude response is overdamped.
    """
    climb_cmd = config.alt_gain * (alt_ref - alt)
    climb_cmd = min(max(climb_cmd, -config.max_descent), config.max_climb)
    accel_up = config.speed_gain * (climb_cmd + v_vert)
    thrust = params.m * (params.g + accel_up) / max(tilt, 0.5)
    delta, saturated = deflection_from_thrust(thrust, params)
    if saturated:
        thrust = math.copysign(params.max_thrust, thrust)
    return delta, saturated, thrust


@dataclass
class TrackCommand:
    deflection: float
    saturated: bool
    thrust: float
    accel_cmd: float


def track_step(
    accel_meas: float,
    target: float,
    controller: PirqController,
    dt: float,
    params: VehicleParams,
    trim: float,
) -> TrackCommand:
    """One Track-phase sample: PIRQ on the specific-force error, then the thrust map.

    The error is ``(target - measured)`` converted to down-positive specific
    force; the controller output adds to ``trim`` to give the commanded
    thrusting acceleration (m/s^2, down positive).
    """
    error = G0 * (accel_meas - target)
    accel_cmd = trim + controller.step(error, dt)
    thrust = -params.m * accel_cmd
    delta, saturated = deflection_from_thrust(thrust, params)
    return TrackCommand(delta, saturated, thrust, accel_cmd)


class TrackController:
    """Track-phase loop: input shaping plus PIRQ, started bumplessly.

    At phase entry the integrator chain is loaded so that the first command
    equals the thrust being applied, and the shaped target starts at the
    current reading.
    """

    def __init__(self, controller: PirqController, params: VehicleParams, config: AutomatonConfig,
                 accel0: float, thrust0: float):
        self.controller = controller
        self.params = params
        self.config = config
        self.accel0 = accel0
        self.trim = config.a_d - params.g
        kQ = controller.gains.kQ
        u_now = -thrust0 / params.m
        controller.state = np.array([(u_now - self.trim) / kQ, 0.0, 0.0])
        self.t = 0.0

    def target(self) -> float:
        return input_shaper(self.accel0, self.config.target_g, self.config.shaping_tau, self.t)

    def step(self, accel_meas: float) -> tuple[TrackCommand, float]:
        target = self.target()
        cmd = track_step(accel_meas, target, self.controller, self.config.dt, self.params, self.trim)
        self.t += self.config.dt
        return cmd, target


@dataclass(frozen=True)
class AttitudeGains:
    """Cascade gains: P on roll/pitch angle, PI on body rates.

    Rate gains are in 1/s and 1/s^2 and get multiplied by the axis inertia,
    so each axis loop is ``(kp s + ki) / (s^2)`` times the rotor dynamics.
    With the identified rotor response the defaults give about 50 deg of
    phase margin and 14 dB of gain margin on roll and pitch.
    """

    angle_kp: tuple[float, float] = (2.0, 2.0)
    rate_kp: tuple[float, float, float] = (10.0, 10.0, 5.0)
    rate_ki: tuple[float, float, float] = (5.0, 5.0, 5.0)
    inertia: tuple[float, float, float] = (0.0068, 0.0171, 0.0207)


def attitude_cascade_step(
    rates,
    attitude,
    references,
    gains: AttitudeGains,
    integrator,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Moment commands (N m) and the updated rate-error integrals.

    ``attitude`` is ``(phi, theta)``; ``references`` is ``(phi_ref, theta_ref)``.
    Yaw angle is left free: the yaw-rate reference is always zero.
    """
    p, q, r = rates
    phi, theta = attitude[0], attitude[1]
    phi_ref, theta_ref = references[0], references[1]
    rate_ref = np.array([
        gains.angle_kp[0] * (phi_ref - phi),
        gains.angle_kp[1] * (theta_ref - theta),
        0.0,
    ])
    err = rate_ref - np.array([p, q, r])
    integ = np.asarray(integrator, dtype=float) + err * dt
    accel = np.asarray(gains.rate_kp) * err + np.asarray(gains.rate_ki) * integ
    return np.asarray(gains.inertia) * accel, integ


@dataclass
class AttitudeLoop:
    gains: AttitudeGains
    integrator: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def step(self, rates, attitude, references, dt: float) -> np.ndarray:
        moments, self.integrator = attitude_cascade_step(rates, attitude, references, self.gains, self.integrator, dt)
        return moments
