"""Flattening modulus: the slope constant nu(L), the clock j(t) and omega(t, r).

The clock is the nonnegative solution of the autonomous piecewise ODE

    j' = -(nu^2/L) j            for nu/2 < j <= 1
    j' = -nu^3/(2L)             for nu^4/8 < j <= nu/2
    j' = -(nu^(5/3)/L) j^(1/3)  for 0 <= j <= nu^4/8

with j(0) = 1.  Each phase is solved in closed form and the pieces are
stitched at j = nu/2 and j = nu^4/8; the clock reaches zero at ``tstar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.integrate import solve_ivp

MIN_LIPSCHITZ = 1.0


class DomainError(ValueError):
    """An argument lies outside the range where the formulas are valid."""


def _check_L(L: float) -> float:
    L = float(L)
    if not math.isfinite(L) or L < MIN_LIPSCHITZ:
        raise DomainError(f"Lipschitz constant must satisfy L >= {MIN_LIPSCHITZ}, got {L}")
    return L


@dataclass(frozen=True)
class LipschitzBudget:
    """Slope bound L >= 1 of the interface."""

    L: float

    def __post_init__(self):
        object.__setattr__(self, "L", _check_L(self.L))

    @property
    def polynomial_bound_applies(self) -> bool:
        return self.L >= 2.0


def nu_of(L: float) -> float:
    """Return nu(L) = L / (3 (L^2 + 1)^(3/2))."""
    L = _check_L(L)
    return L / (3.0 * (L * L + 1.0) ** 1.5)


def nu_of_mp(L, dps: int = 40) -> mpmath.mpf:
    """nu(L) evaluated with ``dps`` decimal digits."""
    with mpmath.workdps(dps):
        L = mpmath.mpf(L)
        return L / (3 * (L**2 + 1) ** mpmath.mpf(1.5))


def _phase_times(L: float, nu: float) -> tuple[float, float, float]:
    t1 = L * math.log(2.0 / nu) / nu**2
    t2 = t1 + (nu / 2.0 - nu**4 / 8.0) * (2.0 * L / nu**3)
    tstar = t2 + 0.375 * nu * L
    return t1, t2, tstar


def tstar_of(L: float) -> float:
    """Extinction time of the clock,

    T* = L ln(2/nu)/nu^2 + (nu/2 - nu^4/8)(2L/nu^3) + (3/8) nu L.
    """
    L = _check_L(L)
    return _phase_times(L, nu_of(L))[2]


def tstar_of_mp(L, dps: int = 40) -> mpmath.mpf:
    """Extended-precision evaluation of the same closed form (reference value)."""
    _check_L(float(L))
    with mpmath.workdps(dps):
        L = mpmath.mpf(L)
        nu = nu_of_mp(L, dps)
        return (
            L * mpmath.log(2 / nu) / nu**2
            + (nu / 2 - nu**4 / 8) * (2 * L / nu**3)
            + mpmath.mpf(3) / 8 * nu * L
        )


@dataclass(frozen=True)
class FlatteningClock:
    """Closed-form clock j(t) for a fixed L.

    ``t1`` ends the exponential phase (j = nu/2), ``t2`` ends the affine phase
    (j = nu^4/8) and ``tstar`` is the extinction time.
    """

    L: float
    nu: float
    t1: float
    t2: float
    tstar: float

    @classmethod
    def from_L(cls, L: float) -> "FlatteningClock":
        L = _check_L(L)
        nu = nu_of(L)
        return cls(L, nu, *_phase_times(L, nu))

    @property
    def j_affine_start(self) -> float:
        return self.nu / 2.0

    @property
    def j_power_start(self) -> float:
        return self.nu**4 / 8.0


def _check_times(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise DomainError("times must be finite and nonnegative")
    return t


def j_of(clock: FlatteningClock, t):
    """Evaluate j(t); scalar in, float out; array in, array out."""
    t = _check_times(t)
    L, nu = clock.L, clock.nu
    expo = np.exp(-(nu**2) / L * np.minimum(t, clock.t1))
    affine = clock.j_affine_start - nu**3 / (2.0 * L) * (t - clock.t1)
    # j^(2/3) decays affinely in the last phase
    base = clock.j_power_start ** (2.0 / 3.0) - (2.0 / 3.0) * nu ** (5.0 / 3.0) / L * (t - clock.t2)
    power = np.maximum(base, 0.0) ** 1.5
    out = np.where(t <= clock.t1, expo, np.where(t <= clock.t2, affine, power))
    out = np.where(t >= clock.tstar, 0.0, out)
    return float(out) if out.ndim == 0 else out


def j_prime(clock: FlatteningClock, t):
    """Closed-form derivative of the clock (zero from ``tstar`` on)."""
    t = _check_times(t)
    L, nu = clock.L, clock.nu
    j = np.asarray(j_of(clock, t))
    out = np.where(
        t <= clock.t1,
        -(nu**2) / L * j,
        np.where(t <= clock.t2, -(nu**3) / (2.0 * L), -(nu ** (5.0 / 3.0)) / L * np.cbrt(j)),
    )
    out = np.where(t >= clock.tstar, 0.0, out)
    return float(out) if out.ndim == 0 else out


def j_rate(clock: FlatteningClock, j):
    """Right-hand side of the clock ODE as a function of the state j."""
    j = np.maximum(np.asarray(j, dtype=float), 0.0)
    L, nu = clock.L, clock.nu
    out = np.where(
        j > clock.j_affine_start,
        -(nu**2) / L * j,
        np.where(j > clock.j_power_start, -(nu**3) / (2.0 * L), -(nu ** (5.0 / 3.0)) / L * np.cbrt(j)),
    )
    return float(out) if out.ndim == 0 else out


def j_rate_floor(clock: FlatteningClock, j):
    """-min{(nu^2/L) j + nu^3/(2L), (nu^(5/3)/L) j^(1/3)}, the slowest admissible decay."""
    j = np.maximum(np.asarray(j, dtype=float), 0.0)
    L, nu = clock.L, clock.nu
    out = -np.minimum(nu**2 / L * j + nu**3 / (2.0 * L), nu ** (5.0 / 3.0) / L * np.cbrt(j))
    return float(out) if out.ndim == 0 else out


def j_ode_reference(clock: FlatteningClock, t_eval, rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Integrate the clock ODE numerically (DOP853), independent of the closed form.

    The rate changes formula at j = nu/2 and j = nu^4/8; the solver locates
    these crossings as events and restarts there, and the zero of j ends the
    last phase.  Returns j at the sorted times ``t_eval``.
    """
    t_eval = _check_times(t_eval)
    if np.any(np.diff(t_eval) < 0):
        raise ValueError("t_eval must be sorted")
    out = np.zeros_like(t_eval)
    levels = [clock.j_affine_start, clock.j_power_start, 0.0]
    t0, j0 = 0.0, 1.0
    t_end = 10.0 * max(clock.tstar, 1.0)
    for level in levels:
        def hit(t, y, level=level):
            return y[0] - level

        hit.terminal = True
        hit.direction = -1
        sol = solve_ivp(
            lambda t, y: [j_rate(clock, y[0])],
            (t0, t_end),
            [j0],
            method="DOP853",
            rtol=rtol,
            atol=atol,
            events=hit,
            dense_output=True,
        )
        if sol.t_events[0].size == 0:
            raise RuntimeError("clock ODE did not reach the next phase")
        t1 = float(sol.t_events[0][0])
        mask = (t_eval >= t0) & (t_eval <= t1)
        out[mask] = sol.sol(t_eval[mask])[0]
        t0, j0 = t1, level
    out[t_eval > t0] = 0.0
    return out


def profile(nu: float, r):
    """Time-independent part of omega: nu(r - r^1.5/2^1.5) on [0, 2], nu r/2 up to 2/nu, then 1."""
    r = np.asarray(r, dtype=float)
    rc = np.clip(r, 0.0, None)
    inner = nu * (rc - rc**1.5 / 2.0**1.5)
    out = np.where(rc <= 2.0, inner, np.where(rc <= 2.0 / nu, 0.5 * nu * rc, 1.0))
    return float(out) if out.ndim == 0 else out


def profile_slope(nu: float, r):
    """Derivative of ``profile`` taken from the right (left at the outer knot)."""
    r = np.asarray(r, dtype=float)
    inner = nu * (1.0 - 0.75 * np.sqrt(np.clip(r, 0.0, None)) / math.sqrt(2.0))
    out = np.where(r < 2.0, inner, np.where(r <= 2.0 / nu, 0.5 * nu, 0.0))
    return float(out) if out.ndim == 0 else out


def profile_curvature(nu: float, r: float) -> float:
    """Second derivative of ``profile`` away from the knots."""
    if r <= 0.0:
        raise DomainError("curvature undefined at r <= 0")
    if r < 2.0:
        return -nu * 0.375 / math.sqrt(2.0 * r)
    return 0.0


@dataclass(frozen=True)
class Modulus:
    """omega(t, r) = j(t) + profile(r) for a fixed Lipschitz constant."""

    L: float
    nu: float
    clock: FlatteningClock = field(repr=False)

    @classmethod
    def from_L(cls, L: float) -> "Modulus":
        clock = FlatteningClock.from_L(L)
        return cls(clock.L, clock.nu, clock)

    @property
    def saturation_radius(self) -> float:
        return 2.0 / self.nu

    @property
    def knots(self) -> tuple[float, float]:
        return 2.0, 2.0 / self.nu

    def j(self, t):
        return j_of(self.clock, t)

    def __call__(self, t, r):
        return omega_of(self, t, r)


def omega_of(m: Modulus, t, r):
    """omega(t, r); both arguments must be nonnegative (broadcasts over arrays)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r_arr)) or np.any(r_arr < 0):
        raise DomainError("radius must be finite and nonnegative")
    out = np.asarray(j_of(m.clock, t)) + np.asarray(profile(m.nu, r_arr))
    return float(out) if out.ndim == 0 else out


def omega_slope(m: Modulus, t: float, r: float):
    """Radial derivative of omega(t, .) at r > 0.

    At the knots r = 2 and r = 2/nu the one-sided slopes differ and the pair
    ``(left, right)`` is returned; elsewhere a single float.
    """
    _check_times(t)
    r = float(r)
    if not r > 0.0 or not math.isfinite(r):
        raise DomainError("radial slope needs 0 < r < inf")
    nu = m.nu
    if r == 2.0:
        return (0.25 * nu, 0.5 * nu)
    if r == 2.0 / nu:
        return (0.5 * nu, 0.0)
    return profile_slope(nu, r)


def conservative_slope(slope) -> float:
    """Largest magnitude among one-sided slopes (what the beta bound must absorb)."""
    if isinstance(slope, tuple):
        return max(slope, key=abs)
    return slope
