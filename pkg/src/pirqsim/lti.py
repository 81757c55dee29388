"""Single-input single-output LTI state-space machinery.

Systems are stored as ``(A, b, c, d)`` with ``b`` and ``c`` flat vectors, so
``G(s) = c (sI - A)^-1 b + d``. Everything here is a pure function of its
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Minimal SISO realization ``x' = A x + b u``, ``y = c x + d u``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if A.size == 0:
            A = np.zeros((0, 0))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if b.shape != (n,) or c.shape != (n,):
            raise ValueError(
                f"inconsistent dimensions: A is {n}x{n}, len(b)={b.size}, len(c)={c.size}"
            )
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n else np.zeros(0, dtype=complex)

    def transfer_function(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator and monic denominator coefficients, highest power first.

        Uses ``c (sI-A)^-1 b = [det(sI - A + b c) - det(sI - A)] / det(sI - A)``
        so the readback does not depend on the realization.
        """
        if self.n == 0:
            return np.array([self.d]), np.array([1.0])
        den = np.real(np.poly(self.A))
        num = np.real(np.poly(self.A - np.outer(self.b, self.c))) - den + self.d * den
        return num, den


def from_transfer_function(numerator, denominator) -> LtiSystem:
    """Controllable-canonical realization of ``num(s) / den(s)``.

    Coefficients are given highest power first. The state ordering puts the
    highest derivative first, i.e. ``A`` has ``-a_1 ... -a_n`` on its first row
    and ones on the subdiagonal, with ``b = e_1``.
    """
    num = np.trim_zeros(np.atleast_1d(np.asarray(numerator, dtype=float)), "f")
    den = np.trim_zeros(np.atleast_1d(np.asarray(denominator, dtype=float)), "f")
    if den.size == 0:
        raise ValueError("denominator is identically zero")
    if num.size == 0:
        num = np.zeros(1)
    if num.size > den.size:
        raise ValueError(
            f"improper transfer function: numerator degree {num.size - 1} exceeds "
            f"denominator degree {den.size - 1}"
        )
    lead = den[0]
    den = den / lead
    num = np.concatenate([np.zeros(den.size - num.size), num]) / lead
    n = den.size - 1
    d = num[0]
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    if n:
        A[0, :] = -den[1:]
        A[1:, :-1] = np.eye(n - 1)
    b = np.zeros(n)
    if n:
        b[0] = 1.0
    return LtiSystem(A, b, rem, d)


def dc_gain(sys: LtiSystem) -> float:
    """``-c A^-1 b + d``; raises ``ValueError`` when A has a pole at the origin."""
    if sys.n == 0:
        return sys.d
    scale = max(1.0, np.linalg.norm(sys.A, 1))
    if np.min(np.abs(np.linalg.eigvals(sys.A))) <= 1e-12 * scale:
        raise ValueError("undefined DC gain: A is singular (pole at s = 0)")
    return float(-sys.c @ np.linalg.solve(sys.A, sys.b) + sys.d)


def is_stable(sys: LtiSystem) -> bool:
    if sys.n == 0:
        return True
    return bool(np.max(np.linalg.eigvals(sys.A).real) < 0.0)


def transmission_zeros(sys: LtiSystem) -> np.ndarray:
    """Finite generalized eigenvalues of the Rosenbrock pencil."""
    n = sys.n
    if n == 0:
        return np.zeros(0, dtype=complex)
    M = np.block([[sys.A, sys.b[:, None]], [-sys.c[None, :], np.array([[sys.d]])]])
    N = np.zeros((n + 1, n + 1))
    N[:n, :n] = np.eye(n)
    w = linalg.eigvals(M, N)
    return w[np.isfinite(w)]


def is_minimum_phase(sys: LtiSystem) -> bool:
    z = transmission_zeros(sys)
    return bool(np.all(z.real < 0.0))


def frequency_response(sys: LtiSystem, omega):
    """``c (j omega I - A)^-1 b + d``; scalar in, scalar out, array in, array out."""
    w = np.asarray(omega, dtype=float)
    if sys.n == 0:
        return complex(sys.d) if w.ndim == 0 else np.full(w.shape, sys.d, dtype=complex)
    eye = np.eye(sys.n)
    flat = [
        complex(sys.c @ np.linalg.solve(1j * wi * eye - sys.A, sys.b) + sys.d)
        for wi in w.reshape(-1)
    ]
    if w.ndim == 0:
        return flat[0]
    return np.array(flat).reshape(w.shape)


def discretize(sys: LtiSystem, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold pair ``(Ad, Bd)`` via the augmented exponential."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = sys.n
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = sys.A
    M[:n, n] = sys.b
    E = linalg.expm(M * dt)
    return E[:n, :n], E[:n, n]


def propagate(sys: LtiSystem, state, u: float, dt: float) -> np.ndarray:
    """Advance ``state`` by ``dt`` with ``u`` held constant (exact ZOH)."""
    Ad, Bd = discretize(sys, dt)
    return Ad @ np.asarray(state, dtype=float) + Bd * u


def second_order_lag(bandwidth: float, damping: float) -> LtiSystem:
    """Unit-DC-gain ``wn^2 / (s^2 + 2 zeta wn s + wn^2)``."""
    return from_transfer_function([bandwidth**2], [1.0, 2.0 * damping * bandwidth, bandwidth**2])
