"""Flat ``key = value`` scenario configuration.

Blank lines and ``#`` comments are ignored. Every key has a default except
``a_d_g``, the desired accelerometer reading during the maneuver in G
(0.378 for Martian gravity).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from pirqsim.vehicle import STANDARD_GRAVITY

G0 = STANDARD_GRAVITY


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_complexes(text: str) -> tuple[complex, ...]:
    return tuple(complex(part.replace(" ", "")) for part in text.split(",") if part.strip())


def _fmt_complex(z: complex) -> str:
    return f"{z.real!r}{z.imag:+}j"


_PARSERS = {
    float: float,
    int: int,
    str: str.strip,
    bool: _parse_bool,
    "floats": _parse_floats,
    "complexes": _parse_complexes,
}

_FORMATTERS = {
    float: repr,
    int: str,
    str: str,
    bool: lambda v: "true" if v else "false",
    "floats": lambda v: ", ".join(repr(float(x)) for x in v),
    "complexes": lambda v: ", ".join(_fmt_complex(complex(z)) for z in v),
}


def _key(kind, default=dataclasses.MISSING, doc: str = ""):
    return field(default=default, metadata={"kind": kind, "doc": doc})


@dataclass(frozen=True)
class ScenarioConfig:
    a_d_g: float = _key(float, doc="desired accelerometer reading during Track, G")
    mass: float = _key(float, 1.265, "kg")
    ixx: float = _key(float, 0.0068, "kg m^2")
    iyy: float = _key(float, 0.0171, "kg m^2")
    izz: float = _key(float, 0.0207, "kg m^2")
    gravity: float = _key(float, G0, "m/s^2")
    drag_b: float = _key(float, 0.05, "quadratic drag coefficient, 1/m")
    delta_max: float = _key(float, 0.09, "blade deflection limit, rad")
    thrust_ratio: float = _key(float, 2.0, "max collective thrust over weight")
    thrust_linear_share: float = _key(float, 0.7, "share of max thrust from the linear term of the curve")
    arm_length: float = _key(float, 0.25, "m")
    yaw_torque_coeff: float = _key(float, 0.02, "reaction torque per thrust, m")
    inflow_derate: float = _key(float, 0.0, "thrust derate per m/s of body w")
    actuator_num: tuple = _key("floats", (1.0,), "actuator transfer function numerator")
    actuator_den: tuple = _key("floats", (0.0008, 0.045, 1.0), "actuator transfer function denominator")
    sensor_bandwidth_ratio: float = _key(float, 5.0, "sensor natural frequency over actuator's")
    sensor_damping: float = _key(float, 0.7, "")
    pirq_kp: float = _key(float, 1.0, "")
    pirq_zeros: tuple = _key("complexes", (-10 + 0j, -15 + 5j, -15 - 5j), "compensator zeros")
    hover_alt: float = _key(float, 2.0, "m")
    alt_error_threshold: float = _key(float, 0.1, "m")
    dwell_time: float = _key(float, 2.0, "s")
    ceiling: float = _key(float, 60.0, "m")
    switch_margin: float = _key(float, 5.0, "m")
    critical_recovery_alt: float = _key(float, 8.0, "m")
    shaping_tau: float = _key(float, 0.25, "s")
    loop_rate: float = _key(float, 333.0, "Hz")
    physics_step: float = _key(float, 0.003, "nominal integration step, s")
    integrator: str = _key(str, "bs3", "bs3 or rk4")
    recover_speed: float = _key(float, 0.2, "m/s")
    alt_gain: float = _key(float, 1.0, "1/s")
    speed_gain: float = _key(float, 6.0, "1/s")
    max_climb: float = _key(float, 3.0, "m/s")
    land_speed: float = _key(float, 1.5, "m/s")
    touchdown_alt: float = _key(float, 0.05, "m")
    wind_amplitude: float = _key(float, 0.0, "vertical gust force rms, N")
    wind_bandwidth: float = _key(float, 2.0, "rad/s")
    seed: int = _key(int, 0, "")
    max_duration: float = _key(float, 120.0, "s")
    certify: bool = _key(bool, True, "certify the design before flying")
    convention: str = _key(str, "midpoint-small-gain", "midpoint-small-gain or span-squared")
    theta_min: float = _key(float, -3.0, "certification window start, s")
    theta_max: float = _key(float, 4.0, "certification window end, s")

    @property
    def reduced_gravity(self) -> float:
        """Desired accelerometer magnitude, m/s^2."""
        return self.a_d_g * G0

    @property
    def fall_accel(self) -> float:
        """Downward acceleration of the fall that produces ``a_d_g``."""
        return self.gravity - self.reduced_gravity

    def validate(self) -> "ScenarioConfig":
        if not self.fall_accel > 0:
            raise ConfigError(f"a_d_g = {self.a_d_g} leaves no downward acceleration (no maneuver)")
        if not self.a_d_g > 0:
            raise ConfigError(f"a_d_g = {self.a_d_g} gives no reduced-gravity target (no maneuver)")
        if not self.ceiling > self.hover_alt > 0:
            raise ConfigError("need ceiling > hover_alt > 0")
        if self.ceiling > 120.0:
            raise ConfigError("ceiling above 120 m")
        for name in ("mass", "ixx", "iyy", "izz", "gravity", "delta_max", "loop_rate", "physics_step",
                     "shaping_tau", "critical_recovery_alt", "max_duration", "pirq_kp"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.drag_b < 0:
            raise ConfigError("drag_b must be non-negative")
        if self.integrator not in ("bs3", "rk4"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.convention not in ("midpoint-small-gain", "span-squared"):
            raise ConfigError(f"unknown convention {self.convention!r}")
        if not self.theta_max > self.theta_min:
            raise ConfigError("theta_max must exceed theta_min")
        if len(self.pirq_zeros) != 3:
            raise ConfigError("pirq_zeros needs exactly three entries")
        return self


FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
REQUIRED = tuple(name for name, f in FIELDS.items() if f.default is dataclasses.MISSING)


def parse_config(text: str) -> ScenarioConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        kind = FIELDS[key].metadata["kind"]
        try:
            values[key] = _PARSERS[kind](value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {key} = {value!r}: {exc}", lineno) from None
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return ScenarioConfig(**values).validate()


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def format_config(config: ScenarioConfig) -> str:
    lines = []
    for name, f in FIELDS.items():
        kind = f.metadata["kind"]
        doc = f.metadata["doc"]
        line = f"{name} = {_FORMATTERS[kind](getattr(config, name))}"
        lines.append(f"{line}  # {doc}" if doc else line)
    return "\n".join(lines) + "\n"


def write_config(path, config: ScenarioConfig) -> None:
    Path(path).write_text(format_config(config))


def default_config(**overrides) -> ScenarioConfig:
    values = {"a_d_g": 0.378}
    values.update(overrides)
    return ScenarioConfig(**values).validate()
