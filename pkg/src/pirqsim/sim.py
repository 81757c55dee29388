"""Full-flight scenario runner.

The controller runs at ``loop_rate`` and holds its outputs over each control
period. The rigid body and accelerometer filter are integrated with a fixed
explicit Runge-Kutta step no longer than ``physics_step``; the rotor actuator
dynamics, whose inputs are held, are propagated exactly and sampled at the
Runge-Kutta stage times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from pirqsim.automaton import (
    G0,
    AttitudeGains,
    AttitudeLoop,
    Automaton,
    AutomatonConfig,
    ManeuverPhase,
    TrackController,
    altitude_controller,
)
from pirqsim.config import ScenarioConfig
from pirqsim.integrate import STEPPERS, NonFiniteStateError
from pirqsim.lti import LtiSystem, dc_gain, discretize, from_transfer_function, second_order_lag
from pirqsim.pirq import PirqController, PirqGains, stabilizing_gains
from pirqsim.stability import StabilityCertificate, certify, transverse_system
from pirqsim.vehicle import (
    VehicleParams,
    deflection_from_thrust,
    euler_angles,
    gravity_body,
    quaternion_derivative,
    rotation_matrix,
)


class SimulationError(RuntimeError):
    pass


@dataclass
class TelemetryRecord:
    t: float
    altitude: float
    v_vert: float
    accel_g: float
    phase: ManeuverPhase
    deflection_cmd: float
    saturation: bool


@dataclass
class ScenarioResult:
    records: list[TelemetryRecord]
    events: list[tuple[float, ManeuverPhase]]
    certificate: StabilityCertificate | None = None
    completed: bool = True
    fault: bool = False
    max_error_estimate: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def phase_sequence(self) -> list[ManeuverPhase]:
        return [phase for _, phase in self.events]


@dataclass
class Design:
    """Everything derived from a config before flying."""

    params: VehicleParams
    plant: LtiSystem
    sensor: LtiSystem
    gains: PirqGains
    automaton: AutomatonConfig


def actuator_bandwidth(plant: LtiSystem) -> float:
    return float(np.max(np.abs(plant.poles())))


def build_design(config: ScenarioConfig) -> Design:
    params = VehicleParams(
        m=config.mass,
        Ixx=config.ixx,
        Iyy=config.iyy,
        Izz=config.izz,
        g=config.gravity,
        drag_b=config.drag_b,
        delta_max=config.delta_max,
        thrust_coeffs=(
            config.thrust_linear_share * config.thrust_ratio * config.mass * config.gravity / config.delta_max,
            (1 - config.thrust_linear_share) * config.thrust_ratio * config.mass * config.gravity
            / config.delta_max**3,
        ),
        arm_length=config.arm_length,
        yaw_torque_coeff=config.yaw_torque_coeff,
        inflow_derate=config.inflow_derate,
    )
    plant = from_transfer_function(config.actuator_num, config.actuator_den)
    gain = dc_gain(plant)
    if abs(gain - 1.0) > 1e-9:
        raise ValueError(f"actuator DC gain must be 1, got {gain}")
    sensor = second_order_lag(config.sensor_bandwidth_ratio * actuator_bandwidth(plant), config.sensor_damping)
    gains = stabilizing_gains(config.pirq_zeros, config.pirq_kp, plant, sensor)
    brake = params.max_thrust / params.m - params.g
    automaton = AutomatonConfig(
        a_d=config.fall_accel,
        target_g=config.a_d_g,
        hover_alt=config.hover_alt,
        alt_error_threshold=config.alt_error_threshold,
        dwell_time=config.dwell_time,
        ceiling=config.ceiling,
        switch_margin=config.switch_margin,
        critical_recovery_alt=config.critical_recovery_alt,
        recovery_decel=brake,
        shaping_tau=config.shaping_tau,
        loop_rate=config.loop_rate,
        recover_speed=config.recover_speed,
        alt_gain=config.alt_gain,
        speed_gain=config.speed_gain,
        max_climb=config.max_climb,
        max_descent=config.land_speed,
    )
    return Design(params, plant, sensor, gains, automaton)


def certify_design(design: Design, config: ScenarioConfig, theta_min=None, theta_max=None) -> StabilityCertificate:
    ts = transverse_system(design.plant, design.gains, design.sensor, config.drag_b, config.fall_accel)
    return certify(
        ts,
        config.theta_min if theta_min is None else theta_min,
        config.theta_max if theta_max is None else theta_max,
        convention=config.convention,
    )


class RotorBank:
    """Four identical rotor actuators with held thrust commands, propagated exactly."""

    def __init__(self, plant: LtiSystem, h: float, offsets, n_rotors: int = 4):
        self.plant = plant
        self.h = h
        self.states = np.zeros((n_rotors, plant.n))
        self.commands = np.zeros(n_rotors)
        self._samples = {}
        for a in offsets:
            if a == 0.0:
                self._samples[0.0] = (plant.c.copy(), 0.0)
            else:
                Ad, Bd = discretize(plant, a * h)
                self._samples[a] = (plant.c @ Ad, float(plant.c @ Bd))
        self._step = discretize(plant, h)

    def trim(self, thrust_each: float) -> None:
        x_eq = -np.linalg.solve(self.plant.A, self.plant.b) * thrust_each
        self.states[:] = x_eq
        self.commands[:] = thrust_each

    def outputs(self, fraction: float) -> np.ndarray:
        cA, cB = self._samples[fraction]
        return self.states @ cA + cB * self.commands

    def advance(self) -> None:
        Ad, Bd = self._step
        self.states = self.states @ Ad.T + np.outer(self.commands, Bd)


def _stage_fractions(method: str) -> tuple[float, ...]:
    return (0.0, 0.5, 0.75, 1.0) if method == "bs3" else (0.0, 0.5, 1.0)


class Mixer:
    """Collective thrust and body moments to per-rotor thrust, X layout."""

    def __init__(self, params: VehicleParams):
        s = params.arm_length / math.sqrt(2.0)
        # rotor positions (x forward, y right) and spin signs
        xy = np.array([[s, s], [-s, -s], [s, -s], [-s, s]])
        spin = np.array([1.0, 1.0, -1.0, -1.0])
        self.allocation = np.vstack([
            np.ones(4),
            -xy[:, 1],
            xy[:, 0],
            params.yaw_torque_coeff * spin,
        ])
        self.inverse = np.linalg.inv(self.allocation)

    def split(self, thrust: float, moments) -> np.ndarray:
        return self.inverse @ np.array([thrust, moments[0], moments[1], moments[2]])

    def combine(self, rotor_thrusts) -> tuple[float, np.ndarray]:
        w = self.allocation @ rotor_thrusts
        return float(w[0]), w[1:]


def make_vector_field(design: Design, bank: RotorBank, mixer: Mixer, wind_force, t_sub0: float, h: float):
    params, sensor = design.params, design.sensor
    m, g = params.m, params.g
    inertia = params.inertia
    b_v, b_h = params.drag_b, params.horizontal_drag_b
    Aa, ba = sensor.A, sensor.b
    Ixx, Iyy, Izz = inertia

    def f(t, y):
        frac = round((t - t_sub0) / h, 12)
        rotor = bank.outputs(frac)
        q = y[3:7]
        U = y[7:10]
        Om = y[10:13]
        u, v, w = U
        p, qq, r = Om
        if params.inflow_derate:
            rotor = rotor * (1.0 + params.inflow_derate * w)
        thrust, moments = mixer.combine(rotor)
        R = rotation_matrix(q)
        V = R @ U
        drag_i = -m * np.array([b_h * V[0] * abs(V[0]), b_h * V[1] * abs(V[1]), b_v * V[2] * abs(V[2])])
        drag_i[2] += wind_force
        F = R.T @ drag_i
        F[2] -= thrust
        dU = np.array([v * r - w * qq, w * p - u * r, u * qq - v * p]) + gravity_body(q, g) + F / m
        dOm = np.array([
            qq * r * (Iyy - Izz) / Ixx + moments[0] / Ixx,
            p * r * (Izz - Ixx) / Iyy + moments[1] / Iyy,
            p * qq * (Ixx - Iyy) / Izz + moments[2] / Izz,
        ])
        xa = y[13:]
        dxa = Aa @ xa + ba * (F[2] / m)
        return np.concatenate([V, quaternion_derivative(q, Om), dU, dOm, dxa])

    return f


def run_scenario(config: ScenarioConfig, sensor_fault=None, design: Design | None = None) -> ScenarioResult:
    """Fly Hover -> Ascend -> Track -> Recover -> Land.

    ``sensor_fault`` optionally maps ``(t, alt, v_vert, accel_g)`` to corrupted
    readings, for fault-injection tests.
    """
    config.validate()
    design = build_design(config) if design is None else design
    certificate = certify_design(design, config) if config.certify else None
    params, plant, sensor = design.params, design.plant, design.sensor
    auto_cfg = design.automaton

    dt = 1.0 / config.loop_rate
    n_sub = max(1, int(round(dt / config.physics_step)))
    h = dt / n_sub
    stepper = STEPPERS[config.integrator]
    bank = RotorBank(plant, h, _stage_fractions(config.integrator))
    mixer = Mixer(params)
    hover_thrust = params.m * params.g
    bank.trim(hover_thrust / 4.0)

    # rigid body on the ground, level, accelerometer settled at 1 G
    y = np.zeros(13 + sensor.n)
    y[3] = 1.0
    y[13:] = -np.linalg.solve(sensor.A, sensor.b) * (-params.g)

    automaton = Automaton(auto_cfg)
    attitude = AttitudeLoop(AttitudeGains(inertia=tuple(params.inertia)))
    track: TrackController | None = None
    pirq = PirqController(design.gains)
    rng = np.random.default_rng(config.seed)
    wind_state = 0.0
    wind_decay = math.exp(-config.wind_bandwidth * dt)
    wind_gain = config.wind_amplitude * math.sqrt(1.0 - wind_decay**2)

    records: list[TelemetryRecord] = []
    max_err = 0.0
    completed = False
    fault = False
    thrust_cmd = hover_thrust
    n_steps = int(math.ceil(config.max_duration / dt))

    for k in range(n_steps + 1):
        t = k * dt
        alt = -y[2]
        V = rotation_matrix(y[3:7]) @ y[7:10]
        v_vert = V[2]
        accel_g = float(sensor.c @ y[13:]) / -G0
        if sensor_fault is not None:
            alt, v_vert, accel_g = sensor_fault(t, alt, v_vert, accel_g)
        prev = automaton.phase
        saturated = False
        phase = automaton.update(t, alt, v_vert, accel_g, saturated=False)

        if phase is ManeuverPhase.TRACK and prev is not ManeuverPhase.TRACK:
            pirq = PirqController(design.gains)
            track = TrackController(pirq, params, auto_cfg, accel_g, thrust_cmd)

        if phase is ManeuverPhase.HOVER:
            delta, saturated, thrust_cmd = altitude_controller(alt, auto_cfg.hover_alt, v_vert, auto_cfg, params)
        elif phase is ManeuverPhase.ASCEND or phase is ManeuverPhase.RECOVER:
            thrust_cmd, delta, saturated = params.max_thrust, params.delta_max, True
        elif phase is ManeuverPhase.TRACK:
            cmd, _ = track.step(accel_g)
            saturated = cmd.saturated
            delta = cmd.deflection
            thrust_cmd = math.copysign(min(abs(cmd.thrust), params.max_thrust), cmd.thrust)
            if saturated:
                phase = automaton.update(t, alt, v_vert, accel_g, saturated=True)
                thrust_cmd, delta = params.max_thrust, params.delta_max
        elif phase is ManeuverPhase.LAND:
            delta, saturated, thrust_cmd = altitude_controller(alt, -1.0, v_vert, auto_cfg, params)
        else:
            delta = 0.0

        records.append(TelemetryRecord(t, float(alt), float(v_vert), float(accel_g), phase, float(delta), saturated))

        if phase is ManeuverPhase.FAULT:
            fault = True
            break
        if phase is ManeuverPhase.LAND and alt <= config.touchdown_alt:
            completed = True
            break

        phi, theta, _ = euler_angles(y[3:7])
        moments = attitude.step(y[10:13], (phi, theta), (0.0, 0.0), dt)
        rotor_cmd = mixer.split(thrust_cmd, moments)
        limit = params.max_thrust / 4.0
        bank.commands = np.clip(rotor_cmd, -limit, limit)

        if config.wind_amplitude:
            wind_state = wind_decay * wind_state + wind_gain * rng.standard_normal()

        try:
            for i in range(n_sub):
                t0 = t + i * h
                f = make_vector_field(design, bank, mixer, wind_state, t0, h)
                y, err = stepper(f, t0, y, h)
                if err == err:
                    max_err = max(max_err, err)
                y[3:7] /= np.linalg.norm(y[3:7])
                bank.advance()
        except NonFiniteStateError:
            automaton.phase = ManeuverPhase.FAULT
            automaton.events.append((t + dt, ManeuverPhase.FAULT))
            records.append(TelemetryRecord(t + dt, math.nan, math.nan, math.nan, ManeuverPhase.FAULT, 0.0, False))
            fault = True
            break

    return ScenarioResult(
        records=records,
        events=list(automaton.events),
        certificate=certificate,
        completed=completed,
        fault=fault,
        max_error_estimate=max_err,
        info={"dt": dt, "physics_step": h, "substeps": n_sub},
    )


CSV_HEADER = "t,altitude,v_vert,accel_g,phase,deflection,saturation"
_PHASES = {phase.value: phase for phase in ManeuverPhase}


def _num(x: float) -> str:
    return format(float(x) + 0.0, ".9g")


def format_telemetry(records) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            _num(r.t), _num(r.altitude), _num(r.v_vert), _num(r.accel_g),
            r.phase.value, _num(r.deflection_cmd), "1" if r.saturation else "0",
        ]))
    return "\n".join(lines) + "\n"


def write_telemetry(path, records) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_telemetry(records))


def read_telemetry(path) -> list[TelemetryRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or ",".join(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected telemetry header {header!r}")
        records = []
        for row in reader:
            if not row:
                continue
            t, alt, vv, acc, phase, defl, sat = row
            if phase not in _PHASES:
                raise ValueError(f"{path}: unknown phase {phase!r}")
            records.append(TelemetryRecord(float(t), float(alt), float(vv), float(acc), _PHASES[phase],
                                           float(defl), sat.strip() in ("1", "true", "True")))
    return records


def check_records(records, dt: float, rtol: float = 1e-9) -> None:
    """Raise ``ValueError`` if the telemetry breaks the record invariants."""
    for prev, cur in zip(records, records[1:]):
        step = cur.t - prev.t
        if not step > 0 or abs(step - dt) > rtol * max(1.0, cur.t) + 1e-12:
            raise ValueError(f"time step {step} at t={cur.t} is not dt={dt}")
    for r in records:
        if r.phase is ManeuverPhase.FAULT:
            continue
        values = (r.t, r.altitude, r.v_vert, r.accel_g, r.deflection_cmd)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite telemetry at t={r.t} in {r.phase.value}")
