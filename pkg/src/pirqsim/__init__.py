"""Reduced-gravity maneuver simulation and PIRQ control for a variable-pitch multirotor."""

from pirqsim.lti import LtiSystem, dc_gain, frequency_response, from_transfer_function
from pirqsim.pirq import (
    ControllerIC,
    InversionCoefficients,
    PirqGains,
    controller_initial_condition,
    inversion_coefficients,
    pirq_realization,
    stabilizing_gains,
)

__version__ = "0.1.0"

__all__ = [
    "ControllerIC",
    "InversionCoefficients",
    "LtiSystem",
    "PirqGains",
    "controller_initial_condition",
    "dc_gain",
    "frequency_response",
    "from_transfer_function",
    "inversion_coefficients",
    "pirq_realization",
    "stabilizing_gains",
]
