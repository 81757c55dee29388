"""Command-line entry point.

Exit codes: 0 success or pass, 1 flight-spec band failed, 2 configuration
error, 3 numerical failure. ``PIRQSIM_OUTPUT_DIR`` overrides where
``simulate`` writes its CSV when no ``--out`` is given.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from pirqsim.config import ConfigError, load_config
from pirqsim.integrate import NonFiniteStateError
from pirqsim.metrics import FlightSpecBand, track_metrics
from pirqsim.pirq import LoopNotStabilizedError, controller_initial_condition, inversion_coefficients
from pirqsim.sim import SimulationError, build_design, certify_design, read_telemetry, run_scenario, write_telemetry
from pirqsim.stability import CertificationError
from pirqsim.vehicle import STANDARD_GRAVITY, bifilar_inertia

EXIT_OK, EXIT_BAND_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_DIR_ENV = "PIRQSIM_OUTPUT_DIR"


def _vec(x) -> str:
    return "[" + ", ".join(format(float(v) + 0.0, ".9g") for v in np.ravel(x)) + "]"


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.no_certify:
        config = dataclasses.replace(config, certify=False)
    result = run_scenario(config)
    out = args.out
    if out is None:
        base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
        out = base / (Path(args.config).stem + ".csv")
    write_telemetry(out, result.records)
    for t, phase in result.events:
        print(f"event t={t:.6f} phase={phase.value}")
    if result.certificate is not None:
        print(f"certified epsilon={result.certificate.epsilon:.6g}")
    print(f"telemetry={out} records={len(result.records)}")
    if result.fault:
        print("run ended in Fault", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_certify(args) -> int:
    config = load_config(args.config)
    cert = certify_design(build_design(config), config)
    sys.stdout.write(cert.to_report())
    return EXIT_OK


def cmd_invert(args) -> int:
    config = load_config(args.config)
    design = build_design(config)
    coeffs = inversion_coefficients(design.plant, config.drag_b, config.fall_accel, config.gravity)
    ic = controller_initial_condition(design.gains, coeffs)
    print(f"u0 = {coeffs.u0:.9g}")
    print(f"u1 = {coeffs.u1:.9g}")
    print(f"u2 = {coeffs.u2:.9g}")
    print(f"x0 = {_vec(coeffs.x0)}")
    print(f"x1 = {_vec(coeffs.x1)}")
    print(f"x2 = {_vec(coeffs.x2)}")
    print(f"q0 = {ic.q0:.9g}")
    print(f"r0 = {ic.r0:.9g}")
    print(f"s0 = {ic.s0:.9g}")
    return EXIT_OK


def cmd_bifilar(args) -> int:
    inertia = bifilar_inertia(args.m, args.g, args.d, args.T, args.L)
    print(f"inertia = {inertia:.9g}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    records = read_telemetry(args.csv)
    band = FlightSpecBand(args.target, args.tol, args.duration)
    result = track_metrics(records, band, shaping_tau=args.tau, desired_g=args.desired, window_start=args.start)
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_BAND_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pirqsim", description="Reduced-gravity quadrotor maneuver simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="fly a scenario and write telemetry CSV")
    p.add_argument("config")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--no-certify", action="store_true", help="skip the stability certificate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="certify the Track design")
    p.add_argument("config")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("invert", help="print the inversion coefficients and controller initial condition")
    p.add_argument("config")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("bifilar", help="moment of inertia from a bifilar pendulum period")
    p.add_argument("--m", type=float, required=True, help="mass, kg")
    p.add_argument("--d", type=float, required=True, help="wire separation, m")
    p.add_argument("--L", type=float, required=True, help="wire length, m")
    p.add_argument("--T", type=float, required=True, help="period, s")
    p.add_argument("--g", type=float, default=STANDARD_GRAVITY)
    p.set_defaults(func=cmd_bifilar)

    p = sub.add_parser("metrics", help="Track statistics of a telemetry CSV against a flight-spec band")
    p.add_argument("csv")
    p.add_argument("--target", type=float, required=True, help="G")
    p.add_argument("--tol", type=float, required=True, help="G")
    p.add_argument("--duration", type=float, required=True, help="required time in band, s")
    p.add_argument("--tau", type=float, default=None, help="input-shaping time constant, opens the window late")
    p.add_argument("--desired", type=float, default=None, help="shaped target in G, default --target")
    p.add_argument("--start", type=float, default=None, help="explicit window start, s")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, LoopNotStabilizedError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CertificationError, NonFiniteStateError, SimulationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
