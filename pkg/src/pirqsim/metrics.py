"""Flight-specification statistics over the Track segment of a run."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pirqsim.automaton import ManeuverPhase


@dataclass(frozen=True)
class FlightSpecBand:
    """Required accelerometer band: ``target +- tolerance`` G held for ``required_duration`` s."""

    target: float
    tolerance: float
    required_duration: float

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.required_duration > 0:
            raise ValueError("required_duration must be positive")


@dataclass(frozen=True)
class TrackMetrics:
    mean_g: float
    std_g: float
    duration_in_band: float
    passed: bool
    window_start: float
    n_samples: int

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"mean_g={self.mean_g:.6f} std_g={self.std_g:.6f} "
                f"duration_in_band={self.duration_in_band:.4f}s samples={self.n_samples} verdict={verdict}")


def settle_time(a0: float, target: float, tau: float, fraction: float = 0.01) -> float:
    """Time for a first-order shaper from ``a0`` to come within ``fraction`` of ``target``."""
    gap = abs(a0 - target)
    limit = fraction * abs(target)
    if gap <= limit or limit == 0.0:
        return 0.0
    return tau * math.log(gap / limit)


def longest_run(mask, dt: float) -> float:
    best = run = 0
    for inside in mask:
        run = run + 1 if inside else 0
        best = max(best, run)
    return best * dt


def track_metrics(records, band: FlightSpecBand, shaping_tau: float | None = None,
                  desired_g: float | None = None, window_start: float | None = None) -> TrackMetrics:
    """Mean, spread and time-in-band of the accelerometer over the Track phase.

    Samples before ``window_start`` are dropped. If it is not given and
    ``shaping_tau`` is, the window opens when the shaped target has come
    within 1% of ``desired_g`` (default ``band.target``). Otherwise the whole
    Track segment is used. Duration in band is the longest contiguous run of
    samples with ``|accel - target| <= tolerance``, times the sample period.
    """
    track = [r for r in records if r.phase is ManeuverPhase.TRACK]
    if not track:
        raise ValueError("telemetry has no Track phase")
    t = np.array([r.t for r in track])
    a = np.array([r.accel_g for r in track])
    if window_start is None:
        window_start = t[0]
        if shaping_tau is not None:
            goal = band.target if desired_g is None else desired_g
            window_start += settle_time(a[0], goal, shaping_tau)
    keep = t >= window_start - 1e-12
    if not keep.any():
        raise ValueError("no Track samples after the window start")
    t, a = t[keep], a[keep]
    dt = float(np.median(np.diff(t))) if t.size > 1 else 0.0
    inside = np.abs(a - band.target) <= band.tolerance + 1e-12
    duration = longest_run(inside, dt)
    return TrackMetrics(
        mean_g=float(a.mean()),
        std_g=float(a.std()),
        duration_in_band=duration,
        passed=duration >= band.required_duration,
        window_start=float(window_start),
        n_samples=int(a.size),
    )
