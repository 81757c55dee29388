"""Transverse stability of the constant-acceleration fall.

Along the fall the loop state follows a curve parametrized by the vertical
speed ``v`` (equivalently ``theta = v / a_d``, the nominal elapsed time).
Deviations ``rho`` from that curve obey ``rho' = A(theta) rho`` where
``A(theta) = A0 + theta * b_vec c_vec`` is affine with a rank-one slope. A
quadratic ``V = rho' P rho`` decaying like ``exp(-2 eps t)`` on a theta window
certifies that the fall is exponentially attractive there.

The frequency-domain test is a cheap sufficient filter; :func:`lyapunov_grid_check`
on the resulting ``P`` is the ground truth for any certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate, linalg, optimize

from pirqsim.lti import LtiSystem
from pirqsim.pirq import (
    ControllerIC,
    InversionCoefficients,
    PirqGains,
    closed_loop_matrix,
    pirq_realization,
)

CONVENTIONS = ("midpoint-small-gain", "span-squared")


class CertificationError(RuntimeError):
    """No certificate could be produced; ``diagnostic`` says why."""

    def __init__(self, message: str, **diagnostic):
        super().__init__(message)
        self.diagnostic = diagnostic


@dataclass(frozen=True, eq=False)
class TransverseSystem:
    Abar: np.ndarray
    xbar1: np.ndarray
    xbar2: np.ndarray
    cbar: np.ndarray
    b: float
    a_d: float

    @property
    def A0(self) -> np.ndarray:
        return self.Abar - 2.0 * self.b * self.a_d * np.outer(self.xbar1, self.cbar)

    @property
    def b_vec(self) -> np.ndarray:
        return -2.0 * self.b * self.a_d * self.xbar2

    @property
    def c_vec(self) -> np.ndarray:
        return self.cbar

    def a_theta(self, theta: float) -> np.ndarray:
        return self.A0 + theta * np.outer(self.b_vec, self.c_vec)


def a_theta(ts: TransverseSystem, theta: float) -> np.ndarray:
    return ts.a_theta(theta)


def transverse_vectors(plant: LtiSystem, gains: PirqGains, n_sensor: int) -> tuple[np.ndarray, np.ndarray]:
    """Offset and slope of ``x'(a_d theta) / (2 b a_d)`` along the fall.

    Neither depends on ``a_d``; the sensor block of both is zero.
    """
    A, bp, cp = plant.A, plant.b, plant.c
    m1 = np.linalg.solve(A, bp)
    m2 = np.linalg.solve(A, m1)
    h2 = float(cp @ m2)
    kR, kQ = gains.kR, gains.kQ
    xbar1 = np.concatenate([-(m2 + h2 * m1), [(h2 - kR / kQ) / kQ, 1.0 / kQ, 0.0], np.zeros(n_sensor)])
    xbar2 = np.concatenate([-m1, [1.0 / kQ, 0.0, 0.0], np.zeros(n_sensor)])
    return xbar1, xbar2


def transverse_system(plant: LtiSystem, gains: PirqGains, sensor: LtiSystem, b: float, a_d: float) -> TransverseSystem:
    if not a_d > 0:
        raise ValueError("a_d must be positive")
    loop = closed_loop_matrix(plant, pirq_realization(gains), sensor)
    xbar1, xbar2 = transverse_vectors(plant, gains, sensor.n)
    return TransverseSystem(loop.A, xbar1, xbar2, loop.cbar, float(b), float(a_d))


class ManeuverPoint(NamedTuple):
    xp: np.ndarray
    xc: np.ndarray
    xa: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.xp, self.xc, self.xa])


def maneuver_curve(
    v: float, coeffs: InversionCoefficients, ic: ControllerIC, a_d: float, sensor: LtiSystem, g: float
) -> ManeuverPoint:
    """Loop state on the fall when the descent speed is ``v``."""
    if not a_d > 0:
        raise ValueError("a_d must be positive")
    t = v / a_d
    xa = -np.linalg.solve(sensor.A, sensor.b) * (a_d - g)
    return ManeuverPoint(coeffs.state_at(t), ic.state_at(t), xa)


class CircleResult(NamedTuple):
    certified: bool
    margin: float
    peak: float
    bound: float
    peak_omega: float
    Atilde: np.ndarray
    theta_r: float
    abscissa: float


def centered_form(ts: TransverseSystem, theta_min: float, theta_max: float, convention: str):
    """``(Atilde, theta_r, bound_fn)`` for the chosen centering convention.

    ``midpoint-small-gain`` centres ``A(theta)`` on the window midpoint and
    bounds the gain by ``1/theta_r``. ``span-squared`` uses ``A0 + (theta_max -
    theta_min) A1`` with the bound ``1/theta_r**2``.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    if not theta_max > theta_min:
        raise ValueError("theta_max must exceed theta_min")
    theta_r = 0.5 * (theta_max - theta_min)
    if convention == "midpoint-small-gain":
        center = 0.5 * (theta_max + theta_min)
        bound = 1.0 / theta_r
    else:
        center = theta_max - theta_min
        bound = 1.0 / theta_r**2
    return ts.a_theta(center), theta_r, bound


def default_omega_grid() -> np.ndarray:
    return np.logspace(-3, 4, 400)


def _gain(A: np.ndarray, b: np.ndarray, c: np.ndarray, w: float) -> float:
    return abs(c @ np.linalg.solve(1j * w * np.eye(A.shape[0]) - A, b))


def hinf_peak(A: np.ndarray, b: np.ndarray, c: np.ndarray, omega_grid) -> tuple[float, float]:
    """Peak of ``|c (jw - A)^-1 b|`` over the grid and ``w = 0``, refined locally."""
    grid = np.concatenate([[0.0], np.sort(np.asarray(omega_grid, dtype=float))])
    gains = np.array([_gain(A, b, c, w) for w in grid])
    i = int(np.argmax(gains))
    peak, w_peak = float(gains[i]), float(grid[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda w: -_gain(A, b, c, w), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10 * max(1.0, hi)})
        if -res.fun > peak:
            peak, w_peak = float(-res.fun), float(res.x)
    return peak, w_peak


def circle_criterion_check(
    ts: TransverseSystem,
    epsilon: float,
    theta_min: float,
    theta_max: float,
    omega_grid=None,
    convention: str = "midpoint-small-gain",
) -> CircleResult:
    """Frequency-domain test for ``A(theta)`` with theta in the window.

    ``margin = bound - peak``; positive means certified. An unstable shifted
    matrix returns ``certified=False`` with its spectral abscissa.
    """
    omega_grid = default_omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    if omega_grid.size == 0:
        raise ValueError("empty frequency grid")
    Atilde, theta_r, bound = centered_form(ts, theta_min, theta_max, convention)
    shifted = Atilde + epsilon * np.eye(Atilde.shape[0])
    abscissa = float(np.max(np.linalg.eigvals(shifted).real))
    if abscissa >= 0:
        return CircleResult(False, -math.inf, math.inf, bound, math.nan, Atilde, theta_r, abscissa)
    if not np.any(ts.b_vec):
        # no drag: A(theta) is constant and stability of the shifted matrix suffices
        return CircleResult(True, math.inf, 0.0, bound, 0.0, Atilde, theta_r, abscissa)
    peak, w_peak = hinf_peak(shifted, ts.b_vec, ts.c_vec, omega_grid)
    margin = bound - peak
    return CircleResult(margin > 0, margin, peak, bound, w_peak, Atilde, theta_r, abscissa)


def solve_riccati(Atilde, epsilon: float, b_vec, c_vec, theta_r: float, refine: int = 2) -> np.ndarray:
    """Stabilizing solution of ``F'P + PF + theta_r^2 P b b' P + c'c = 0``, ``F = Atilde + eps I``.

    Hamiltonian invariant-subspace method with an ordered real Schur form,
    computed on a diagonally balanced copy of ``F`` and polished by Newton
    steps. Raises :class:`CertificationError` when the Hamiltonian has
    eigenvalues on the imaginary axis (no stabilizing solution).
    """
    F = np.asarray(Atilde, dtype=float) + epsilon * np.eye(len(Atilde))
    b = np.asarray(b_vec, dtype=float).reshape(-1, 1)
    c = np.asarray(c_vec, dtype=float).reshape(1, -1)
    n = F.shape[0]
    _, (scale, _) = linalg.matrix_balance(F, permute=False, separate=True)
    Fs = F * (1.0 / scale)[:, None] * scale[None, :]
    bs = b / scale[:, None]
    cs = c * scale[None, :]
    R = theta_r**2 * (bs @ bs.T)
    Q = cs.T @ cs
    H = np.block([[Fs, R], [-Q, -Fs.T]])
    eigs = np.linalg.eigvals(H)
    closest = float(np.min(np.abs(eigs.real)))
    if closest <= 1e-10 * max(1.0, np.linalg.norm(H, 1)):
        raise CertificationError(
            "no stabilizing Riccati solution: Hamiltonian has eigenvalues on the imaginary axis",
            min_abs_real=closest,
        )
    _, Z, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise CertificationError("stable invariant subspace has wrong dimension", sdim=sdim, n=n)
    X1, X2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(X1) > 1e12:
        raise CertificationError("stable subspace is not a graph (ill-conditioned X1)", cond=np.linalg.cond(X1))
    Ps = np.linalg.solve(X1.T, X2.T).T
    P = Ps / scale[:, None] / scale[None, :]
    P = 0.5 * (P + P.T)
    R = theta_r**2 * (b @ b.T)
    Q = c.T @ c
    for _ in range(refine):
        K = F + R @ P
        if np.max(np.linalg.eigvals(K).real) >= 0:
            break
        residual = F.T @ P + P @ F + P @ R @ P + Q
        dP = linalg.solve_continuous_lyapunov(K.T, -residual)
        P = P + 0.5 * (dP + dP.T)
    return P


def riccati_residual(P, Atilde, epsilon, b_vec, c_vec, theta_r) -> float:
    F = np.asarray(Atilde) + epsilon * np.eye(len(Atilde))
    b = np.asarray(b_vec).reshape(-1, 1)
    c = np.asarray(c_vec).reshape(1, -1)
    res = F.T @ P + P @ F + theta_r**2 * P @ b @ b.T @ P + c.T @ c
    return float(np.linalg.norm(res, "fro"))


class GridCheck(NamedTuple):
    passed: bool
    worst: float
    worst_theta: float
    scale: float


def lyapunov_grid_check(ts: TransverseSystem, P, epsilon: float, theta_samples, tol: float = 1e-9) -> GridCheck:
    """``max_theta lambda_max(A(theta)'P + P A(theta) + 2 eps P) <= tol * scale``.

    The matrix is affine in theta, so the two endpoints decide the whole
    interval by convexity of ``lambda_max``; interior samples are a redundancy
    check. ``scale`` is the largest Frobenius norm of the summed terms, which
    makes the threshold invariant to the realization's units.
    """
    P = np.asarray(P, dtype=float)
    thetas = np.asarray(theta_samples, dtype=float).reshape(-1)
    worst, worst_theta, scale = -math.inf, math.nan, 0.0
    for th in thetas:
        A = ts.a_theta(th)
        AtP = A.T @ P
        M = AtP + AtP.T + 2.0 * epsilon * P
        lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
        scale = max(scale, 2.0 * np.linalg.norm(AtP, "fro") + 2.0 * abs(epsilon) * np.linalg.norm(P, "fro"))
        if lam > worst:
            worst, worst_theta = lam, float(th)
    limit = tol * max(1.0, scale)
    return GridCheck(bool(worst <= limit), worst, worst_theta, scale)


@dataclass
class StabilityCertificate:
    epsilon: float
    P: np.ndarray
    theta_range: tuple[float, float]
    freq_margin: float
    convention: str
    riccati_residual: float = 0.0
    grid_worst: float = 0.0
    method_notes: str = ""
    extra: dict = field(default_factory=dict)

    def to_report(self) -> str:
        eig = np.linalg.eigvalsh(self.P)
        lines = {
            "epsilon": f"{self.epsilon:.9g}",
            "freq_margin": f"{self.freq_margin:.9g}",
            "theta_min": f"{self.theta_range[0]:.9g}",
            "theta_max": f"{self.theta_range[1]:.9g}",
            "p_eig_min": f"{eig[0]:.9g}",
            "p_eig_max": f"{eig[-1]:.9g}",
            "riccati_residual": f"{self.riccati_residual:.3e}",
            "grid_worst": f"{self.grid_worst:.3e}",
            "convention": self.convention,
            "method_notes": self.method_notes,
        }
        return "\n".join(f"{k} = {v}" for k, v in lines.items()) + "\n"


def _attempt(ts, epsilon, theta_min, theta_max, omega_grid, convention, theta_samples, min_margin=0.0):
    circ = circle_criterion_check(ts, epsilon, theta_min, theta_max, omega_grid, convention)
    if not circ.certified or circ.margin < min_margin * circ.bound:
        return None, circ
    try:
        P = solve_riccati(circ.Atilde, epsilon, ts.b_vec, ts.c_vec, circ.theta_r)
    except CertificationError:
        return None, circ
    res = riccati_residual(P, circ.Atilde, epsilon, ts.b_vec, ts.c_vec, circ.theta_r)
    if res > 1e-8 * (1.0 + np.linalg.norm(P, "fro")):
        return None, circ
    if np.linalg.eigvalsh(P)[0] <= 0:
        return None, circ
    grid = lyapunov_grid_check(ts, P, epsilon, theta_samples)
    if not grid.passed:
        return None, circ
    return (P, res, grid), circ


def certify(
    ts: TransverseSystem,
    theta_min: float,
    theta_max: float,
    convention: str = "midpoint-small-gain",
    epsilon: float | None = None,
    omega_grid=None,
    n_theta: int = 41,
    iterations: int = 40,
    min_margin: float = 0.01,
) -> StabilityCertificate:
    """Certificate at ``epsilon``, or at the largest certifiable decay rate if ``None``.

    The search bisects ``eps`` on ``(0, |spectral abscissa of Atilde|)``; a
    rate counts as certifiable only if the circle test passes, the Riccati
    solution exists with ``P > 0`` and a small residual, and the grid check
    passes. During the search the frequency margin must also exceed
    ``min_margin`` times the bound, which keeps ``P`` well conditioned.
    """
    thetas = np.linspace(theta_min, theta_max, n_theta)
    Atilde, _, _ = centered_form(ts, theta_min, theta_max, convention)
    abscissa = float(np.max(np.linalg.eigvals(Atilde).real))
    if abscissa >= 0:
        raise CertificationError("centred transverse matrix is not Hurwitz", abscissa=abscissa)
    if epsilon is None:
        lo, hi = 0.0, -abscissa
        best = _attempt(ts, lo, theta_min, theta_max, omega_grid, convention, thetas, min_margin)
        if best[0] is None:
            raise CertificationError("not certifiable even with zero decay rate", margin=best[1].margin)
        best_eps = lo
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            trial = _attempt(ts, mid, theta_min, theta_max, omega_grid, convention, thetas, min_margin)
            if trial[0] is None:
                hi = mid
            else:
                lo, best, best_eps = mid, trial, mid
        epsilon = best_eps
    else:
        best = _attempt(ts, epsilon, theta_min, theta_max, omega_grid, convention, thetas)
        if best[0] is None:
            raise CertificationError(
                f"decay rate {epsilon:g} not certifiable", margin=best[1].margin, abscissa=best[1].abscissa
            )
    (P, res, grid), circ = best
    notes = (
        "bound 1/theta_r, midpoint centring" if convention == "midpoint-small-gain"
        else "bound 1/theta_r^2, Atilde = A0 + (theta_max - theta_min) A1"
    )
    return StabilityCertificate(
        epsilon=float(epsilon),
        P=P,
        theta_range=(float(theta_min), float(theta_max)),
        freq_margin=float(circ.margin),
        convention=convention,
        riccati_residual=res,
        grid_worst=grid.worst,
        method_notes=notes,
    )


@dataclass
class DecayReport:
    t: np.ndarray
    theta: np.ndarray
    V: np.ndarray
    ratio: np.ndarray
    max_ratio: float
    truncated: bool
    rho: np.ndarray
    exit: str | None = None


def loop_vector_field(loop, b: float, a_d: float, g: float):
    """Right-hand side of the nonlinear fall: loop states plus ``v`` (last slot)."""
    A, ref, drag, cbar = loop.A, loop.ref_input, loop.drag_input, loop.cbar

    def f(_t, y):
        x, v = y[:-1], y[-1]
        dx = A @ x + ref * (a_d - g) + drag * (b * v * v)
        dv = cbar @ x - b * v * v + g
        return np.concatenate([dx, [dv]])

    return f


def transverse_coordinates(x, v, coeffs, ic, a_d, sensor, g) -> np.ndarray:
    return np.asarray(x) - maneuver_curve(v, coeffs, ic, a_d, sensor, g).stacked()


def transverse_decay_sim(
    plant: LtiSystem,
    gains: PirqGains,
    sensor: LtiSystem,
    b: float,
    a_d: float,
    g: float,
    rho0,
    P,
    epsilon: float,
    theta_range: tuple[float, float],
    duration: float | None = None,
    v0: float = 0.0,
    n_out: int = 2001,
) -> DecayReport:
    """Simulate the nonlinear fall from the curve plus ``rho0`` and track ``V = rho' P rho``.

    ``ratio = V(t) exp(2 eps t) / V(0)``; samples after ``theta`` leaves the
    window are dropped, ``truncated`` is set and ``exit`` records the side
    (``"below"`` or ``"above"``). The loop uses the drag model ``b v^2`` of
    the fall, so it is only physical for ``v >= 0``.
    """
    if v0 < 0:
        raise ValueError("initial speed must be non-negative")
    from pirqsim.pirq import controller_initial_condition, inversion_coefficients

    coeffs = inversion_coefficients(plant, b, a_d, g)
    ic = controller_initial_condition(gains, coeffs)
    loop = closed_loop_matrix(plant, pirq_realization(gains), sensor)
    theta_min, theta_max = theta_range
    if duration is None:
        duration = theta_max - v0 / a_d
    x0 = maneuver_curve(v0, coeffs, ic, a_d, sensor, g).stacked() + np.asarray(rho0, dtype=float)
    y0 = np.concatenate([x0, [v0]])
    t_eval = np.linspace(0.0, duration, n_out)
    sol = integrate.solve_ivp(loop_vector_field(loop, b, a_d, g), (0.0, duration), y0,
                              method="DOP853", t_eval=t_eval, rtol=1e-11, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"decay simulation failed: {sol.message}")
    P = np.asarray(P, dtype=float)
    rho = np.array([transverse_coordinates(y[:-1], y[-1], coeffs, ic, a_d, sensor, g) for y in sol.y.T])
    theta = sol.y[-1] / a_d
    V = np.einsum("ij,jk,ik->i", rho, P, rho)
    inside = (theta >= theta_min - 1e-12) & (theta <= theta_max + 1e-12)
    # keep the initial run of samples that stays inside the certified window
    keep = np.cumprod(inside).astype(bool)
    truncated = not bool(np.all(keep))
    exit_side = None
    if truncated:
        first_out = int(np.argmin(keep))
        exit_side = "below" if theta[first_out] < theta_min else "above"
    V0 = V[0]
    ratio = np.where(V0 > 0, V * np.exp(2.0 * epsilon * sol.t) / (V0 if V0 > 0 else 1.0), 0.0)
    return DecayReport(sol.t[keep], theta[keep], V[keep], ratio[keep],
                       float(np.max(ratio[keep])) if np.any(keep) else math.nan, truncated, rho[keep], exit_side)
