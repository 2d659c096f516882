"""Numerical oracles for the comparison inequalities behind the flattening modulus.

Every check here is independent of the time stepper: brute-force grids for
the slope inequality, adaptive quadrature for the one-dimensional integrals
of the modulus, and two unrelated quadrature routes for the two-dimensional
integrals evaluated on a synthetic crossing configuration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .modulus import DomainError, Modulus, j_of, j_prime, profile, profile_slope

ABS_SLACK = 1e-12
REL_SLACK = 1e-3
CLOCK_LINK = "clock_rate_vs_time_derivative"


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _quad(func, a, b, tol, points=None, limit=400, epsrel=0.0):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(func, a, b, points=points, epsabs=tol, epsrel=epsrel, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quad on [{a}, {b}] failed: {exc}") from exc
    return val, err


def _p(nu: float, r: float) -> float:
    # scalar profile; the quadrature loops call this millions of times
    if r <= 2.0:
        return nu * (r - r * math.sqrt(r) / 2.8284271247461903)
    if r <= 2.0 / nu:
        return 0.5 * nu * r
    return 1.0


# --------------------------------------------------------------------------
# slope inequality


@dataclass(frozen=True)
class SlopeTriple:
    """Arguments (alpha_hi, alpha_lo, beta) of the slope inequality."""

    alpha_hi: float
    alpha_lo: float
    beta: float

    def violations(self, L: float, nu: float, tol: float = 0.0) -> list[str]:
        out = []
        if self.alpha_lo > self.alpha_hi + tol:
            out.append("alpha_lo > alpha_hi")
        if not (-L - tol <= self.alpha_lo <= nu + tol):
            out.append("alpha_lo outside [-L, nu]")
        if not (-nu - tol <= self.alpha_hi <= L + tol):
            out.append("alpha_hi outside [-nu, L]")
        if abs(self.beta) > nu + tol:
            out.append("|beta| > nu")
        return out

    def mirrored(self) -> "SlopeTriple":
        """Image under (a, b, c) -> (-b, -a, -c), which leaves the inequality invariant."""
        return SlopeTriple(-self.alpha_lo, -self.alpha_hi, -self.beta)

    def canonical(self) -> "SlopeTriple":
        return self.mirrored() if self.alpha_hi + self.alpha_lo < 0 else self

    def as_tuple(self) -> tuple[float, float, float]:
        return (float(self.alpha_hi), float(self.alpha_lo), float(self.beta))


def _nu(L: float) -> float:
    return L / (3.0 * (L * L + 1.0) ** 1.5)


def _u(a):
    return a / (a * a + 1.0) ** 1.5


def _w(a):
    return 1.0 / (a * a + 1.0) ** 1.5


def monotonicity_gap(t: SlopeTriple, L: float) -> float:
    """LHS minus RHS of the slope inequality,

    (ah + b)/(ah^2+1)^1.5 - (al + b)/(al^2+1)^1.5 - (ah - al)/(3 (L^2+1)^1.5).
    """
    if L < 1:
        raise DomainError("slope inequality needs L >= 1")
    nu = _nu(L)
    bad = t.violations(L, nu)
    if bad:
        raise DomainError("triple outside the constraint box: " + ", ".join(bad))
    ah, al, b = t.as_tuple()
    c = 1.0 / (3.0 * (L * L + 1.0) ** 1.5)
    return (ah + b) * _w(ah) - (al + b) * _w(al) - c * (ah - al)


def _quotient(ah, al, b):
    return ((ah + b) * _w(ah) - (al + b) * _w(al)) / (ah - al)


@dataclass
class MonotonicityReport:
    """Outcome of an exhaustive sweep of the constraint box.

    ``min_gap`` is the smallest LHS - RHS on the grid (zero on the diagonal);
    ``min_quotient`` is the smallest difference quotient of the LHS, whose
    minimizer is the extremal configuration, compared with ``rhs_coefficient``.
    """

    L: float
    nu: float
    resolution: int
    min_gap: float
    gap_argmin: tuple[float, float, float]
    min_offdiagonal_gap: float
    min_quotient: float
    quotient_argmin: tuple[float, float, float]
    rhs_coefficient: float
    passed: bool
    slack: float = ABS_SLACK

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _refine_quotient(start: SlopeTriple, L: float, nu: float, steps: int = 50) -> SlopeTriple:
    lo = np.array([-nu, -L, -nu])
    hi = np.array([L, nu, nu])
    x = np.array(start.as_tuple(), dtype=float)
    step = 0.1 * (hi - lo)

    def val(y):
        if y[0] - y[1] <= 1e-12:
            return math.inf
        return _quotient(*y)

    best = val(x)
    for _ in range(steps):
        for k in range(3):
            for s in (-1.0, 1.0):
                y = x.copy()
                y[k] = min(max(y[k] + s * step[k], lo[k]), hi[k])
                v = val(y)
                if v < best:
                    x, best = y, v
        step *= 0.7
    return SlopeTriple(*x)


def verify_monotonicity(L: float, resolution: int = 200, refine: bool = True) -> MonotonicityReport:
    """Sweep a uniform grid (endpoints included) of the constraint box for fixed L."""
    if L < 1:
        raise DomainError("slope inequality needs L >= 1")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    nu = _nu(L)
    c = 1.0 / (3.0 * (L * L + 1.0) ** 1.5)
    ah = np.linspace(-nu, L, resolution)
    al = np.linspace(-L, nu, resolution)
    betas = np.linspace(-nu, nu, resolution)
    AH, AL = np.meshgrid(ah, al, indexing="ij")
    admissible = AL <= AH
    off = AL < AH
    du = _u(AH) - _u(AL)
    dw = _w(AH) - _w(AL)
    span = np.where(off, AH - AL, 1.0)

    min_gap, gap_arg = math.inf, None
    min_off = math.inf
    min_q, q_arg = math.inf, None
    for b in betas:  # fixed loop order keeps the reduction reproducible
        lhs = du + b * dw
        gap = np.where(admissible, lhs - c * (AH - AL), np.inf)
        k = int(np.argmin(gap))
        if gap.flat[k] < min_gap:
            min_gap = float(gap.flat[k])
            gap_arg = (float(AH.flat[k]), float(AL.flat[k]), float(b))
        min_off = min(min_off, float(np.min(np.where(off, gap, np.inf))))
        q = np.where(off, lhs / span, np.inf)
        k = int(np.argmin(q))
        if q.flat[k] < min_q:
            min_q = float(q.flat[k])
            q_arg = SlopeTriple(float(AH.flat[k]), float(AL.flat[k]), float(b))
    if refine:
        cand = _refine_quotient(q_arg, L, nu)
        cq = _quotient(*cand.as_tuple())
        if cq < min_q:
            min_q, q_arg = float(cq), cand
        min_off = min(min_off, monotonicity_gap(q_arg, L))
    q_arg = q_arg.canonical()
    passed = min_gap >= -ABS_SLACK and min_q >= c - ABS_SLACK
    return MonotonicityReport(
        L=float(L),
        nu=nu,
        resolution=resolution,
        min_gap=min_gap,
        gap_argmin=gap_arg,
        min_offdiagonal_gap=min_off,
        min_quotient=min_q,
        quotient_argmin=q_arg.as_tuple(),
        rhs_coefficient=c,
        passed=bool(passed),
    )


# --------------------------------------------------------------------------
# one-dimensional integrals of the modulus


def kiselev_integrand(eta: float) -> float:
    """[(1+2e)^1.5 + (1-2e)^1.5 - 2] / e^2, with its Taylor expansion near 0."""
    if eta < 1e-3:
        return 3.0 + 0.75 * eta * eta
    return ((1.0 + 2.0 * eta) ** 1.5 + (1.0 - 2.0 * eta) ** 1.5 - 2.0) / (eta * eta)


def kiselev_integral_constant(tol: float = 1e-10) -> float:
    """Integral of ``kiselev_integrand`` over [0, 1/2]."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    val, err = _quad(kiselev_integrand, 0.0, 0.5, tol)
    if err > tol:
        raise QuadratureError(f"error estimate {err:.2e} above tol {tol:.2e}")
    return val


@dataclass(frozen=True)
class RearrangementIntegrals:
    """The near (0 < eta < xi/2) and far (eta > xi/2) integrals of the modulus."""

    xi: float
    near: float
    far: float
    error: float

    @property
    def total(self) -> float:
        return self.near + self.far


def _curvature(nu: float, r: float) -> float:
    return -0.375 * nu / math.sqrt(2.0 * r) if r < 2.0 else 0.0


def rearrangement_integrals(m: Modulus, t: float, xi: float, tol: float = 1e-10) -> RearrangementIntegrals:
    """Evaluate both one-dimensional integrals by adaptive quadrature.

    The clock value cancels in the near integrand and contributes exactly
    -4 j / xi to the far one; the far integrand is -2 p(xi)/eta^2 once both
    arguments exceed 2/nu, which is integrated in closed form.  When xi sits
    on a knot of the profile the near integral diverges (to +inf at the
    convex knot r = 2, to -inf at r = 2/nu) and that infinity is returned.
    """
    if not xi > 0 or not math.isfinite(xi):
        raise DomainError("xi must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    nu = m.nu
    j = j_of(m.clock, t)
    knots = (2.0, 2.0 / nu)
    if xi == knots[0]:
        return RearrangementIntegrals(xi, math.inf, math.nan, math.inf)
    if xi == knots[1]:
        return RearrangementIntegrals(xi, -math.inf, math.nan, math.inf)
    p_xi = _p(nu, xi)
    half = 0.5 * xi

    def near_f(eta):
        return (_p(nu, xi + 2 * eta) + _p(nu, xi - 2 * eta) - 2 * p_xi) / (eta * eta)

    # second difference loses digits as eta -> 0; use its limit 4 p''(xi) there
    eta_c = min(1e-4, 0.25 * min(abs(k - xi) for k in knots), 0.5 * half)
    near_pts = sorted({0.5 * abs(k - xi) for k in knots if 0.5 * abs(k - xi) < half} | set())
    near_pts = [p for p in near_pts if eta_c < p < half]
    near_head = 4.0 * _curvature(nu, xi) * eta_c
    near_val, near_err = _quad(near_f, eta_c, half, 0.25 * tol, points=near_pts or None)

    eta_sat = 0.5 * (knots[1] + xi)

    def far_f(eta):
        return (_p(nu, 2 * eta + xi) - _p(nu, 2 * eta - xi) - 2 * p_xi) / (eta * eta)

    far_pts = sorted({0.5 * (k - xi) for k in knots} | {0.5 * (k + xi) for k in knots})
    far_pts = [p for p in far_pts if half < p < eta_sat]
    far_val, far_err = _quad(far_f, half, eta_sat, 0.25 * tol, points=far_pts or None)
    far_total = far_val - 2.0 * p_xi / eta_sat - 4.0 * j / xi
    err = near_err + far_err
    if err > tol:
        raise QuadratureError(f"error estimate {err:.2e} above tol {tol:.2e}")
    return RearrangementIntegrals(xi, near_head + near_val, far_total, err)


def rearrangement_rhs(m: Modulus, t: float, xi: float, tol: float = 1e-10) -> float:
    """Sum of the near and far integrals (see ``rearrangement_integrals``)."""
    return rearrangement_integrals(m, t, xi, tol).total


def dissipation_floor(nu: float, j: float) -> float:
    """-min{nu j + nu^2/2, j^(1/3) nu^(2/3)}."""
    return -min(nu * j + 0.5 * nu * nu, max(j, 0.0) ** (1.0 / 3.0) * nu ** (2.0 / 3.0))


@dataclass(frozen=True)
class DissipationReport:
    xi: float
    near_integral: float
    far_integral: float
    bound: float
    holds: bool
    error: float = 0.0

    @property
    def value(self) -> float:
        return self.near_integral + self.far_integral

    @property
    def margin(self) -> float:
        return self.bound - self.value


def dissipation_bound(m: Modulus, t: float, xi: float, tol: float = 1e-10) -> DissipationReport:
    """Compare the rearrangement integrals with their claimed strict upper bound."""
    if not (0.0 < xi < 2.0 / m.nu):
        raise DomainError(f"xi must lie in (0, 2/nu) = (0, {2.0 / m.nu:.6g})")
    r = rearrangement_integrals(m, t, xi, tol)
    bound = dissipation_floor(m.nu, j_of(m.clock, t))
    value = r.total
    holds = bool(math.isfinite(value) and value + r.error < bound)
    return DissipationReport(xi, r.near, r.far, bound, holds, r.error)


# --------------------------------------------------------------------------
# synthetic crossing configuration


def _bump(s):
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, (1.0 - s * s) ** 3, 0.0)


@dataclass
class CrossingFixture:
    """f(x) = (1/2)[p(|x - y0|) - p(|x - x0|)] + (j/2)[phi(|x - x0|/rho) - phi(|x - y0|/rho)].

    ``p`` is the time-independent profile, ``phi(s) = (1 - s^2)^3`` a C^2 bump
    and ``rho = xi/2``.  The profile part attains p(xi) at the pair by
    subadditivity; the bumps add exactly j there while never contributing more
    than j to any increment, so f(x0) - f(y0) = omega(t, xi) and
    f(x) - f(y) <= omega(t, |x - y|) everywhere.  ``scale`` r produces the
    rescaled field f(r x)/r with points x0/r, y0/r.
    """

    modulus: Modulus
    t: float
    xi: float
    base_x0: np.ndarray
    base_y0: np.ndarray
    scale: float = 1.0
    worst_margin: float = math.nan
    j: float = field(init=False)

    def __post_init__(self):
        self.base_x0 = np.asarray(self.base_x0, dtype=float)
        self.base_y0 = np.asarray(self.base_y0, dtype=float)
        self.j = j_of(self.modulus.clock, self.t)

    @property
    def nu(self) -> float:
        return self.modulus.nu

    @property
    def rho(self) -> float:
        return 0.5 * self.xi

    @property
    def x0(self) -> np.ndarray:
        return self.base_x0 / self.scale

    @property
    def y0(self) -> np.ndarray:
        return self.base_y0 / self.scale

    @property
    def direction(self) -> np.ndarray:
        return (self.base_x0 - self.base_y0) / self.xi

    def _base(self, z):
        z = np.asarray(z, dtype=float)
        dx = np.linalg.norm(z - self.base_x0, axis=-1)
        dy = np.linalg.norm(z - self.base_y0, axis=-1)
        nu = self.nu
        return 0.5 * (profile(nu, dy) - profile(nu, dx)) + 0.5 * self.j * (_bump(dx / self.rho) - _bump(dy / self.rho))

    def __call__(self, x):
        """Evaluate at points of shape (..., 2)."""
        return self._base(self.scale * np.asarray(x, dtype=float)) / self.scale

    def scalar(self, x1: float, x2: float) -> float:
        s = self.scale
        z1, z2 = s * x1, s * x2
        dx = math.hypot(z1 - self.base_x0[0], z2 - self.base_x0[1])
        dy = math.hypot(z1 - self.base_y0[0], z2 - self.base_y0[1])
        nu, rho = self.nu, self.rho
        v = 0.5 * (_p(nu, dy) - _p(nu, dx))
        if dx < rho:
            v += 0.5 * self.j * (1.0 - (dx / rho) ** 2) ** 3
        if dy < rho:
            v -= 0.5 * self.j * (1.0 - (dy / rho) ** 2) ** 3
        return v / s

    def gradient(self) -> np.ndarray:
        """Gradient of the smooth part at x0 (identical at y0): (1/2) p'(xi) e."""
        return 0.5 * profile_slope(self.nu, self.xi) * self.direction

    @property
    def support_radius(self) -> float:
        """f vanishes at distance >= this from either point (scaled coordinates)."""
        return (2.0 / self.nu + self.xi) / self.scale

    def circle_radii(self) -> tuple[float, ...]:
        """Radii (scaled) of the circles about x0 and y0 on which f is not smooth."""
        return tuple(c / self.scale for c in (self.rho, 2.0, 2.0 / self.nu))

    def crossing_margin(self, x, y):
        """omega(t, |x - y|) - (f(x) - f(y)) for point arrays of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = np.linalg.norm(self.scale * (x - y), axis=-1)
        return (self.j + profile(self.nu, d)) / self.scale - (self(x) - self(y))


def construct_crossing_profile(
    m: Modulus,
    t: float,
    xi: float,
    x0=(0.0, 0.0),
    direction=(1.0, 0.0),
    samples: int = 10_000,
    seed: int = 0,
    scale: float = 1.0,
) -> CrossingFixture:
    """Build a crossing fixture at separation ``xi`` and certify it by sampling."""
    if not (0.0 < xi < 2.0 / m.nu):
        raise DomainError(f"xi must lie in (0, 2/nu) = (0, {2.0 / m.nu:.6g})")
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    bx0 = np.asarray(x0, dtype=float)
    by0 = bx0 - xi * e
    fx = CrossingFixture(m, t, xi, bx0, by0, scale=scale)
    rng = np.random.default_rng(seed)
    mid = 0.5 * (fx.x0 + fx.y0)
    half = samples // 2
    wide = fx.support_radius
    near = 2.0 * xi / scale
    xs = np.concatenate([mid + rng.uniform(-wide, wide, (half, 2)), mid + rng.uniform(-near, near, (samples - half, 2))])
    ys = np.concatenate([mid + rng.uniform(-wide, wide, (half, 2)), mid + rng.uniform(-near, near, (samples - half, 2))])
    margin = fx.crossing_margin(xs, ys)
    worst = float(min(margin.min(), fx.crossing_margin(fx.x0, fx.y0)))
    fx.worst_margin = worst
    if worst < -ABS_SLACK * max(1.0, 1.0 / scale):
        raise DomainError(f"fixture violates the crossing assumptions by {-worst:.3e}")
    return fx


# --------------------------------------------------------------------------
# two-dimensional integrals on the fixture


def _muskat_integrand(delta, gh, r):
    return (delta - gh) / (delta * delta + r * r) ** 1.5


@dataclass(frozen=True)
class _Geometry:
    centre: np.ndarray
    other: np.ndarray
    radii: tuple[float, ...]
    rho0: float
    R: float

    @property
    def sep(self) -> float:
        return float(np.linalg.norm(self.other - self.centre))

    @property
    def toward(self) -> float:
        d = self.other - self.centre
        return math.atan2(d[1], d[0])

    def radial_breaks(self) -> list[float]:
        s = self.sep
        pts = {s}
        for c in self.radii:
            pts |= {c, abs(s - c), s + c}
        return sorted(p for p in pts if self.rho0 < p < self.R)

    def angle_kinks(self, r: float) -> list[float]:
        """Angles (relative to ``toward``) where the ray crosses a circle about ``other``."""
        s = self.sep
        out = [0.0]
        for c in self.radii:
            cosv = (r * r + s * s - c * c) / (2.0 * r * s)
            if -1.0 < cosv < 1.0:
                a = math.acos(cosv)
                out += [a, -a]
        return sorted(out)


def _tensor_nodes(breaks, rho0, R, n_log, n_panel):
    """Radial nodes and weights (including the polar Jacobian r)."""
    edges = [rho0] + list(breaks) + [R]
    xg, wg = np.polynomial.legendre.leggauss(n_panel)
    xl, wl = np.polynomial.legendre.leggauss(n_log)
    rs, ws = [], []
    # log-graded first panel resolves the 1/r behaviour at the inner cutoff
    a, b = math.log(edges[0]), math.log(edges[1])
    s = 0.5 * (b - a) * xl + 0.5 * (a + b)
    r = np.exp(s)
    rs.append(r)
    ws.append(0.5 * (b - a) * wl * r * r)
    for a, b in zip(edges[1:-1], edges[2:]):
        # subdivide long panels so the node density stays roughly uniform
        k = max(1, int(math.ceil((b - a) / 2.0)))
        for i in range(k):
            lo = a + (b - a) * i / k
            hi = a + (b - a) * (i + 1) / k
            r = 0.5 * (hi - lo) * xg + 0.5 * (lo + hi)
            rs.append(r)
            ws.append(0.5 * (hi - lo) * wg * r)
    return np.concatenate(rs), np.concatenate(ws)


def _route_tensor(fx: CrossingFixture, rho0, sectors=2048, n_log=64, n_panel=32):
    """Tensor polar rule: Gauss-Legendre in r (log-graded near 0), midpoint in angle."""
    G = fx.gradient()
    f0, f1 = float(fx(fx.x0)), float(fx(fx.y0))
    R = fx.support_radius
    theta = (np.arange(sectors) + 0.5) * (2.0 * math.pi / sectors)
    dtheta = 2.0 * math.pi / sectors
    geo_x = _Geometry(fx.x0, fx.y0, fx.circle_radii(), rho0, R)
    rn, rw = _tensor_nodes(geo_x.radial_breaks(), rho0, R, n_log, n_panel)
    out = {"muskat_x0": 0.0, "muskat_y0": 0.0, "i_f": 0.0}
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    for k0 in range(0, rn.size, 16):
        r = rn[k0 : k0 + 16, None]
        w = rw[k0 : k0 + 16, None] * dtheta
        h = r[..., None] * dirs[None, :, :]
        dx = fx(fx.x0 + h) - f0
        dy = fx(fx.y0 + h) - f1
        gh = h @ G
        out["muskat_x0"] += float(np.sum(w * _muskat_integrand(dx, gh, r)))
        out["muskat_y0"] += float(np.sum(w * _muskat_integrand(dy, gh, r)))
        out["i_f"] += float(np.sum(w * (dx - dy) / r**3))
    return _add_tails(out, fx, f0, f1, R)


def _add_tails(out, fx, f0, f1, R):
    # beyond the support radius f(x + h) = 0, so delta = -f(x); the gradient term is odd
    out["muskat_x0"] += -2.0 * math.pi * f0 / math.sqrt(f0 * f0 + R * R)
    out["muskat_y0"] += -2.0 * math.pi * f1 / math.sqrt(f1 * f1 + R * R)
    out["i_f"] += -2.0 * math.pi * (f0 - f1) / R
    out["delta_dt"] = out["muskat_x0"] - out["muskat_y0"]
    return out


def _route_adaptive(fx: CrossingFixture, rho0, tol=1e-9):
    """Nested adaptive quadrature in (log r, angle) with all kinks passed as breakpoints."""
    G = fx.gradient()
    f0 = fx.scalar(*fx.x0)
    f1 = fx.scalar(*fx.y0)
    R = fx.support_radius
    x0 = fx.x0
    y0 = fx.y0
    geo_x = _Geometry(x0, y0, fx.circle_radii(), rho0, R)
    geo_y = _Geometry(y0, x0, fx.circle_radii(), rho0, R)
    base = geo_x.toward

    def kinks(r):
        a = geo_x.angle_kinks(r)
        b = [k + math.pi for k in geo_y.angle_kinks(r)]
        pts = sorted({(base + k) % (2 * math.pi) for k in a + b})
        return [p for p in pts if 0.0 < p < 2 * math.pi]

    def integrand(kind):
        def inner(th, r):
            c, s = math.cos(th), math.sin(th)
            h1, h2 = r * c, r * s
            if kind == "i_f":
                dx = fx.scalar(x0[0] + h1, x0[1] + h2) - f0
                dy = fx.scalar(y0[0] + h1, y0[1] + h2) - f1
                return (dx - dy) / (r * r * r)
            ctr, fc = (x0, f0) if kind == "muskat_x0" else (y0, f1)
            d = fx.scalar(ctr[0] + h1, ctr[1] + h2) - fc
            return (d - G[0] * h1 - G[1] * h2) / (d * d + r * r) ** 1.5

        def outer(s):
            r = math.exp(s)
            val, _ = _quad(lambda th: inner(th, r), 0.0, 2 * math.pi, tol, points=kinks(r) or None, limit=200, epsrel=1e-8)
            return val * r * r

        return outer

    s_pts = [math.log(p) for p in geo_x.radial_breaks()]
    out = {}
    for kind in ("muskat_x0", "muskat_y0", "i_f"):
        val, _ = _quad(integrand(kind), math.log(rho0), math.log(R), tol, points=s_pts, limit=400, epsrel=1e-6)
        out[kind] = val
    return _add_tails(out, fx, f0, f1, R)


def rel_diff(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@dataclass
class ChainLink:
    name: str
    lhs: float
    rhs: float
    holds: bool
    strict: bool = False

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def compare(name: str, lhs: float, rhs: float, rel: float = REL_SLACK, strict: bool = False) -> ChainLink:
    """lhs <= rhs up to relative slack (strict: lhs < rhs without slack)."""
    if strict:
        ok = lhs < rhs
    else:
        ok = lhs <= rhs + rel * abs(rhs)
    return ChainLink(name, float(lhs), float(rhs), bool(ok), strict)


def evaluate_chain(delta_dt, i_f, r_omega, bound, jprime, K, rel=REL_SLACK):
    """The four comparisons that together forbid a first crossing.

    The first three must hold; the last (the clock outrunning the field) is
    what a genuine crossing would need, so it is reported, not asserted.
    """
    return [
        compare("time_derivative_vs_kernel_integral", delta_dt, K * i_f, rel),
        compare("kernel_integral_vs_rearrangement", i_f, r_omega, rel),
        compare("rearrangement_vs_dissipation", r_omega, bound, rel, strict=True),
        compare(CLOCK_LINK, jprime, delta_dt, rel),
    ]


@dataclass
class ChainReport:
    xi: float
    t: float
    j: float
    K: float
    rho0: float
    tensor: dict
    adaptive: dict
    dual_rel_diff: dict
    r_omega: float
    bound: float
    jprime: float
    links: list
    dual_ok: bool

    @property
    def holds(self) -> bool:
        return self.dual_ok and all(l.holds for l in self.links if not l.name.startswith(CLOCK_LINK))

    @property
    def breakthrough_possible(self) -> bool:
        return any(l.holds for l in self.links if l.name.startswith(CLOCK_LINK))

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["links"] = [l.as_dict() for l in self.links]
        d["holds"] = self.holds
        d["breakthrough_possible"] = self.breakthrough_possible
        return d


def crossing_bound_chain(
    fx: CrossingFixture, rho0: float = 1e-6, rel: float = REL_SLACK, sectors: int = 2048, adaptive_tol: float = 1e-9
) -> ChainReport:
    """Evaluate both two-dimensional integrals on a fixture by two quadrature routes.

    Both integrals diverge logarithmically at the cone tips of the fixture,
    so each route integrates over rho0 <= |h|, identically for both sides.
    The kernel comparison holds pointwise in h, hence on the truncated
    domain, and truncation can only raise the kernel integral, so comparing
    the truncated value with the rearrangement bound is conservative.
    """
    if fx.xi <= 0 or np.allclose(fx.x0, fx.y0):
        raise DomainError("crossing points must be distinct")
    if not (0.0 < rho0 < fx.rho / fx.scale):
        raise DomainError("rho0 must be positive and below the bump radius")
    m = fx.modulus
    L = m.L
    K = 1.0 / (3.0 * (L * L + 1.0) ** 1.5)
    a = _route_tensor(fx, rho0, sectors=sectors)
    b = _route_adaptive(fx, rho0, tol=adaptive_tol)
    diffs = {k: rel_diff(a[k], b[k]) for k in ("muskat_x0", "muskat_y0", "i_f", "delta_dt")}
    r_omega = rearrangement_rhs(m, fx.t, fx.xi)
    bound = dissipation_floor(m.nu, fx.j)
    jp = j_prime(m.clock, fx.t)
    links = evaluate_chain(b["delta_dt"], b["i_f"], r_omega, bound, jp, K, rel)
    for tensor_link in evaluate_chain(a["delta_dt"], a["i_f"], r_omega, bound, jp, K, rel)[:2]:
        tensor_link.name += "[tensor]"
        links.append(tensor_link)
    return ChainReport(
        xi=fx.xi,
        t=fx.t,
        j=fx.j,
        K=K,
        rho0=rho0,
        tensor=a,
        adaptive=b,
        dual_rel_diff=diffs,
        r_omega=r_omega,
        bound=bound,
        jprime=jp,
        links=links,
        dual_ok=all(v <= rel for v in diffs.values()),
    )
