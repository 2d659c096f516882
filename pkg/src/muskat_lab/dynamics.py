"""Time stepping of the Muskat equation with structural monitors.

Monitors track the sup and L2 norms (both non-increasing for the exact
flow), the Lipschitz norm, and the smallest gap between the modulus
omega(t, |x - y|) and the increments f(x) - f(y).  A gap at or below the
detection threshold yields a ``CrossingReport`` carrying the one-sided
increment conditions a genuine first crossing must satisfy; the
``contradiction_chain`` then evaluates the full sequence of comparisons at
that configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels
from .farfield import FarField
from .kernel import InterfaceField, MuskatOperator, PeriodicGrid, QuadratureSpec, spectral_gradient
from .lemma_oracles import CLOCK_LINK, ChainLink, DomainError, evaluate_chain, dissipation_floor, rearrangement_rhs
from .modulus import Modulus, j_of, j_prime, omega_slope, conservative_slope, profile

SUP_SLACK = 1e-6
L2_SLACK = 1e-6
DETECTION_THRESHOLD = 1e-9
SCHEMES = ("rk4", "ifrk4")


class BlowUp(FloatingPointError):
    """The field became non-finite."""


class StabilityError(ValueError):
    """Requested time step exceeds the explicit stability bound."""


# --------------------------------------------------------------------------
# norms


def lipschitz_norm(field: InterfaceField, method: str = "centered") -> float:
    """Max gradient magnitude, by centered differences or spectrally."""
    f = field.values
    if method == "centered":
        h = field.grid.spacing
        gx = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2 * h)
        gy = (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2 * h)
    elif method == "spectral":
        gx, gy = spectral_gradient(f, field.grid)
    else:
        raise ValueError("method must be 'centered' or 'spectral'")
    return float(np.max(np.hypot(gx, gy)))


def sup_norm(field: InterfaceField) -> float:
    return float(np.max(np.abs(field.values)))


def l2_norm(field: InterfaceField) -> float:
    return float(math.sqrt(np.sum(field.values**2)) * field.grid.spacing)


# --------------------------------------------------------------------------
# modulus comparison


@dataclass(frozen=True)
class ModulusCheck:
    min_deficit: float
    x0: tuple[int, int]  # the high point
    y0: tuple[int, int]
    xi: float


def modulus_monitor(field: InterfaceField, t: float, m: Modulus, radius_cap: float = math.inf) -> ModulusCheck:
    """Minimum over grid pairs at torus distance in (0, min(cap, 2/nu)) of omega(t, d) - (f(x) - f(y))."""
    n = field.grid.n
    cap = min(radius_cap, 2.0 / m.nu)
    out_min = np.empty(n)
    out_arg = np.empty((n, 3), dtype=np.int64)
    _kernels.pair_scan(field.values, field.grid.period, m.nu, j_of(m.clock, t), cap, out_min, out_arg)
    i = int(np.argmin(out_min))
    k, a, b = (int(v) for v in out_arg[i])
    x0 = (i, k)
    y0 = ((i + a) % n, (k + b) % n)
    dx = field.grid.spacing
    xi = math.hypot(min(a, n - a) * dx, min(b, n - b) * dx)
    return ModulusCheck(float(out_min[i]), x0, y0, xi)


@dataclass
class CrossingReport:
    """A grid configuration touching the modulus, with the increment conditions checked.

    ``side_conditions`` maps each condition to its worst margin (nonnegative
    when satisfied) over all grid offsets h:

    * ``increment_order``: delta_h f(y0) - delta_h f(x0)
    * ``upper_at_x0``: nu |h| - delta_h f(x0)
    * ``lower_at_y0``: delta_h f(y0) + nu |h|
    * ``gradient_angle_deg`` / ``gradient_magnitude_rel``: mismatch of the
      gradients at x0, y0 with d_r omega along (x0 - y0)/|x0 - y0|
    """

    t0: float
    x0: tuple[int, int]
    y0: tuple[int, int]
    xi: float
    deficit: float
    side_conditions: dict = field(default_factory=dict)
    side_conditions_hold: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "t0": self.t0,
            "x0": list(self.x0),
            "y0": list(self.y0),
            "xi": self.xi,
            "deficit": self.deficit,
            "side_conditions": self.side_conditions,
            "side_conditions_hold": self.side_conditions_hold,
        }


def _offset_norms(grid: PeriodicGrid) -> np.ndarray:
    n = grid.n
    d = np.minimum(np.arange(n), n - np.arange(n)) * grid.spacing
    return np.hypot(d[:, None], d[None, :])


def crossing_report(
    field: InterfaceField, t: float, m: Modulus, check: ModulusCheck, angle_tol: float = 5.0, mag_tol: float = 0.10
) -> CrossingReport:
    """Evaluate the increment conditions at a detected touching pair."""
    if check.x0 == check.y0:
        raise DomainError("crossing points must be distinct")
    f = field.values
    grid = field.grid
    hn = _offset_norms(grid)
    # delta_h f(p) for every grid offset h: roll so that index h maps to p + h
    dx0 = np.roll(f, (-check.x0[0], -check.x0[1]), (0, 1)) - f[check.x0]
    dy0 = np.roll(f, (-check.y0[0], -check.y0[1]), (0, 1)) - f[check.y0]
    nu = m.nu
    sc = {
        "increment_order": float(np.min(dy0 - dx0)),
        "upper_at_x0": float(np.min(nu * hn - dx0)),
        "lower_at_y0": float(np.min(dy0 + nu * hn)),
    }
    gx, gy = spectral_gradient(f, grid)
    g0 = np.array([gx[check.x0], gy[check.x0]])
    g1 = np.array([gx[check.y0], gy[check.y0]])
    n = grid.n
    d = np.array([(check.x0[0] - check.y0[0] + n // 2) % n - n // 2, (check.x0[1] - check.y0[1] + n // 2) % n - n // 2]) * grid.spacing
    e = d / np.linalg.norm(d)
    target = float(conservative_slope(omega_slope(m, t, check.xi))) * e

    def angle(u, v):
        nu_, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu_ == 0 or nv == 0:
            return 0.0 if nu_ == nv else 180.0
        return math.degrees(math.acos(max(-1.0, min(1.0, float(u @ v) / (nu_ * nv)))))

    tn = np.linalg.norm(target)
    sc["gradient_angle_deg"] = max(angle(g0, target), angle(g1, target))
    sc["gradient_magnitude_rel"] = float(max(abs(np.linalg.norm(g) - tn) / tn for g in (g0, g1))) if tn > 0 else math.inf
    tol = -DETECTION_THRESHOLD
    holds = {
        "increment_order": sc["increment_order"] >= tol,
        "upper_at_x0": sc["upper_at_x0"] >= tol,
        "lower_at_y0": sc["lower_at_y0"] >= tol,
        "gradient_match": bool(sc["gradient_angle_deg"] <= angle_tol and sc["gradient_magnitude_rel"] <= mag_tol),
    }
    return CrossingReport(float(t), check.x0, check.y0, check.xi, check.min_deficit, sc, holds)


# --------------------------------------------------------------------------
# monitor log


@dataclass
class MonitorRecord:
    step: int
    t: float
    dt: float
    sup_norm: float
    l2_norm: float
    lipschitz: float
    min_deficit: float
    budget: float = math.nan


@dataclass
class MonitorLog:
    records: list = field(default_factory=list)
    crossing: CrossingReport | None = None
    modulus_enabled: bool = True
    radius_cap: float = math.inf
    threshold: float = DETECTION_THRESHOLD

    def record(self, state: "RunState", budget: float = math.nan) -> MonitorRecord:
        fld = state.field
        deficit = math.nan
        if self.modulus_enabled:
            chk = modulus_monitor(fld, fld.time, state.modulus, self.radius_cap)
            deficit = chk.min_deficit
            if self.crossing is None and deficit <= self.threshold:
                self.crossing = crossing_report(fld, fld.time, state.modulus, chk)
        rec = MonitorRecord(state.step_count, fld.time, state.dt, sup_norm(fld), l2_norm(fld), lipschitz_norm(fld), deficit, budget)
        self.records.append(rec)
        return rec

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def sup_norm_monitor(log: MonitorLog, slack: float = SUP_SLACK) -> bool:
    """True iff max|f| never increases by more than ``slack`` between checkpoints."""
    s = log.column("sup_norm")
    return bool(s.size < 2 or np.all(np.diff(s) <= slack))


def l2_norm_monitor(log: MonitorLog, slack: float = L2_SLACK) -> bool:
    """True iff the L2 norm never increases by more than ``slack`` relative to its previous value."""
    s = log.column("l2_norm")
    return bool(s.size < 2 or np.all(np.diff(s) <= slack * s[:-1]))


def deficit_monitor(log: MonitorLog) -> bool:
    """True iff every recorded modulus gap is strictly positive."""
    d = log.column("min_deficit")
    return bool(np.all(d > 0))


def breakthrough_detect(log: MonitorLog) -> CrossingReport | None:
    return log.crossing


# --------------------------------------------------------------------------
# time stepping


@dataclass
class RunState:
    field: InterfaceField
    modulus: Modulus
    step_count: int = 0
    dt: float = 0.0
    monitors: MonitorLog = field(default_factory=MonitorLog)


@lru_cache(maxsize=8)
def _operator(grid: PeriodicGrid, q: QuadratureSpec) -> MuskatOperator:
    return MuskatOperator(grid, q)


def measured_speed(op: MuskatOperator) -> float:
    """Decay constant c of the linearized operator, measured on the lowest x-mode."""
    g = op.grid
    x1, _ = g.coords()
    phi = np.sin(2 * np.pi * x1 / g.period)
    eps = 1e-4
    rate = op(eps * phi)
    return float(-np.sum(rate * phi) / np.sum(phi * phi) / eps / (2 * np.pi / g.period))


class Stepper:
    """Explicit integrator for one grid and quadrature.

    ``rk4`` is the classical four-stage scheme at the fixed step
    dt_factor * spacing / c.  ``ifrk4`` treats the linearized discrete
    operator exactly (Lawson integrating factor) and picks each step from the
    current state only, dt = min(dt_max, dt_factor * spacing / c_N), where
    c_N bounds the strength of the nonlinear remainder for the current slope.
    """

    def __init__(
        self,
        grid: PeriodicGrid,
        q: QuadratureSpec | None = None,
        scheme: str = "rk4",
        dt_factor: float = 0.25,
        dt_max: float = 0.25,
        rhs_sign: float = 1.0,
    ):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        self.grid = grid
        self.q = (q or QuadratureSpec()).resolve(grid)
        self.op = _operator(grid, self.q)
        self.scheme = scheme
        self.dt_factor = float(dt_factor)
        self.dt_max = float(dt_max)
        self.rhs_sign = float(rhs_sign)  # -1 reverses time; used to check monitor sensitivity
        self.c_meas = measured_speed(self.op)
        kmax = math.sqrt(2.0) * math.pi / grid.spacing
        self.rk4_limit = 2.78 / (self.c_meas * kmax)
        self._mu = None
        self.last_budget = math.nan

    @property
    def mu(self) -> np.ndarray:
        if self._mu is None:
            self._mu = self.op.linear_symbol() * self.rhs_sign
        return self._mu

    def rhs(self, f: np.ndarray) -> np.ndarray:
        res = self.op.evaluate(f)
        self.last_budget = res.budget
        return self.rhs_sign * res.rate

    def default_dt(self, f: np.ndarray) -> float:
        h = self.grid.spacing
        if self.scheme == "rk4":
            return self.dt_factor * h / self.c_meas
        gx, gy = spectral_gradient(f, self.grid)
        s = float(np.max(np.hypot(gx, gy)))
        c_n = 2 * math.pi * min(1.0, 1.0 - (1.0 + s * s) ** -1.5 + 6.0 * s * s)
        if c_n == 0.0:
            return self.dt_max
        return min(self.dt_max, self.dt_factor * h / c_n)

    def advance(self, f: np.ndarray, dt: float) -> np.ndarray:
        if self.scheme == "rk4":
            if dt > self.rk4_limit:
                raise StabilityError(f"dt={dt:.3e} exceeds the RK4 bound {self.rk4_limit:.3e}")
            k1 = self.rhs(f)
            k2 = self.rhs(f + 0.5 * dt * k1)
            k3 = self.rhs(f + 0.5 * dt * k2)
            k4 = self.rhs(f + dt * k3)
            return f + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return self._lawson(f, dt)

    def _lawson(self, f, dt):
        mu = self.mu
        E = np.exp(0.5 * dt * mu)
        fft, ifft = np.fft.fft2, np.fft.ifft2

        def N(u):
            return fft(self.rhs(u)) - mu * fft(u)

        F = fft(f)
        k1 = N(f)
        k2 = N(ifft(E * (F + 0.5 * dt * k1)).real)
        k3 = N(ifft(E * F + 0.5 * dt * k2).real)
        k4 = N(ifft(E * E * F + dt * E * k3).real)
        out = E * E * F + dt / 6.0 * (E * E * k1 + 2.0 * E * (k2 + k3) + k4)
        return ifft(out).real

    def step(self, state: RunState, dt: float | None = None) -> RunState:
        f = state.field.values
        if dt is None:
            dt = self.default_dt(f)
        if not dt > 0:
            raise StabilityError("dt must be positive")
        new = self.advance(f, dt)
        if not np.all(np.isfinite(new)):
            raise BlowUp(f"non-finite field at step {state.step_count + 1}")
        fld = InterfaceField(state.field.grid, new, state.field.time + dt)
        return replace(state, field=fld, step_count=state.step_count + 1, dt=dt)


def step(state: RunState, q: QuadratureSpec | None = None, dt: float | None = None, **kw) -> RunState:
    """Advance one step with a ``Stepper`` built from ``q`` and ``kw``."""
    return Stepper(state.field.grid, q, **kw).step(state, dt)


# --------------------------------------------------------------------------
# initial data


def random_lipschitz(grid: PeriodicGrid, L: float, seed: int, kmax: int = 4, oversample: int = 4) -> np.ndarray:
    """Band-limited random Fourier series scaled into [0, 1] with Lipschitz constant min(L, ...).

    The slope and range are measured on a grid refined ``oversample`` times,
    and the scale is the largest that keeps both slope <= L and range <= 1.
    """
    rng = np.random.default_rng(seed)
    ks = [(a, b) for a in range(-kmax, kmax + 1) for b in range(0, kmax + 1) if (b > 0 or a > 0) and max(abs(a), b) <= kmax]
    coef = rng.standard_normal((len(ks), 2))

    def evaluate(n):
        x = np.arange(n) * grid.period / n
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        g = np.zeros((n, n))
        g1 = np.zeros((n, n))
        g2 = np.zeros((n, n))
        for (a, b), (c, s) in zip(ks, coef):
            w1, w2 = 2 * np.pi * a / grid.period, 2 * np.pi * b / grid.period
            ph = w1 * X1 + w2 * X2
            g += c * np.cos(ph) + s * np.sin(ph)
            d = -c * np.sin(ph) + s * np.cos(ph)
            g1 += w1 * d
            g2 += w2 * d
        return g, float(np.max(np.hypot(g1, g2)))

    fine, lip = evaluate(grid.n * oversample)
    lo, osc = float(fine.min()), float(fine.max() - fine.min())
    scale = min(L / lip, 1.0 / osc)
    g, _ = evaluate(grid.n)
    return np.clip(scale * (g - lo), 0.0, 1.0)


def mode_initial(grid: PeriodicGrid, k=(1, 0), amp: float = 1e-3, offset: float = 0.5) -> np.ndarray:
    x1, x2 = grid.coords()
    return offset + amp * np.sin(2 * np.pi * (k[0] * x1 + k[1] * x2) / grid.period)


def crossing_fixture_field(grid: PeriodicGrid, m: Modulus, t: float, x0=None, offset=(8, 0)) -> tuple[np.ndarray, tuple, tuple]:
    """Grid version of the crossing fixture using torus distances.

    Returns values, x0 and y0 = x0 - offset (grid indices).  Subadditivity of
    the profile along the torus metric keeps every increment below the
    modulus, with equality at the pair.
    """
    n = grid.n
    x0 = (n // 2, n // 2) if x0 is None else tuple(int(v) for v in x0)
    y0 = ((x0[0] - offset[0]) % n, (x0[1] - offset[1]) % n)
    X1, X2 = grid.coords()

    def tdist(p):
        c = np.array(p) * grid.spacing
        d1 = np.abs(X1 - c[0]) % grid.period
        d2 = np.abs(X2 - c[1]) % grid.period
        return np.hypot(np.minimum(d1, grid.period - d1), np.minimum(d2, grid.period - d2))

    xi = grid.torus_distance(np.array(x0) * grid.spacing, np.array(y0) * grid.spacing)
    if not (0 < xi < 2.0 / m.nu):
        raise DomainError("fixture separation must lie in (0, 2/nu)")
    rho = 0.5 * xi
    j = j_of(m.clock, t)
    dx, dy = tdist(x0), tdist(y0)
    bump = lambda s: np.where(s < 1.0, (1.0 - s * s) ** 3, 0.0)
    f = 0.5 * (profile(m.nu, dy) - profile(m.nu, dx)) + 0.5 * j * (bump(dx / rho) - bump(dy / rho))
    return f, x0, y0


# --------------------------------------------------------------------------
# chain at a crossing


@dataclass
class ChainVerdict:
    xi: float
    t0: float
    delta_dt: float
    kernel_integral: float
    r_omega: float
    bound: float
    jprime: float
    jprime_fd: float
    K: float
    links: list

    @property
    def first_failure(self) -> str | None:
        for l in self.links:
            if not l.name.startswith(CLOCK_LINK) and not l.holds:
                return l.name
        return None

    @property
    def chain_holds(self) -> bool:
        return self.first_failure is None

    @property
    def contradiction(self) -> bool:
        """True when the chain holds and the clock cannot be outrun, i.e. no genuine crossing."""
        return self.chain_holds and not any(l.holds for l in self.links if l.name.startswith(CLOCK_LINK))

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "links"}
        d["links"] = [l.as_dict() for l in self.links]
        d["first_failure"] = self.first_failure
        d["chain_holds"] = self.chain_holds
        d["contradiction"] = self.contradiction
        return d


def kernel_integral_at(field: InterfaceField, x0, y0, op: MuskatOperator) -> float:
    """int (delta_h f(x0) - delta_h f(y0)) / |h|^3 dh with the operator's polar rule.

    Off-grid values come from exact trigonometric interpolation at the two
    points; the exterior |h| > R is added with the first-order far-field
    multiplier, which is exact for this integrand because it is linear in f.
    """
    grid = field.grid
    f = field.values
    F = (np.fft.fft2(f) / f.size).ravel()
    kx, ky = (k.ravel() for k in grid.wavevectors())
    nd = op.nodes
    total = 0.0
    for pt, sign in ((x0, 1.0), (y0, -1.0)):
        p = np.array(pt) * grid.spacing
        for s in (1.0, -1.0):
            for a in range(0, nd.r.size, 64):
                sl = slice(a, a + 64)
                ph = np.exp(1j * (np.multiply.outer(p[0] + s * nd.h0[sl], kx) + np.multiply.outer(p[1] + s * nd.h1[sl], ky)))
                vals = (ph @ F).real
                total += sign * float(np.sum(nd.w[sl] * (vals - f[pt]) / nd.r[sl] ** 3))
    lin = FarField(grid.wavevectors()[0], grid.wavevectors()[1], op.q.R).linear(f) if op.far is None else op.far.linear(f)
    return total + float(lin[tuple(x0)] - lin[tuple(y0)])


def contradiction_chain(report: CrossingReport, state: RunState, q: QuadratureSpec | None = None, rel: float = 1e-3) -> ChainVerdict:
    """Evaluate every comparison of the no-crossing argument at a reported pair."""
    m = state.modulus
    if report.xi >= 2.0 / m.nu:
        raise DomainError("a crossing pair must be closer than 2/nu")
    fld = state.field
    op = _operator(fld.grid, (q or QuadratureSpec()).resolve(fld.grid))
    rate = op(fld.values)
    delta_dt = float(rate[report.x0] - rate[report.y0])
    i_f = kernel_integral_at(fld, report.x0, report.y0, op)
    t0 = report.t0
    r_omega = rearrangement_rhs(m, t0, report.xi)
    bound = dissipation_floor(m.nu, j_of(m.clock, t0))
    jp = j_prime(m.clock, t0)
    hfd = 1e-6 * max(1.0, t0)
    jp_fd = (j_of(m.clock, t0 + hfd) - j_of(m.clock, max(t0 - hfd, 0.0))) / (t0 + hfd - max(t0 - hfd, 0.0))
    K = m.nu / m.L
    links = evaluate_chain(delta_dt, i_f, r_omega, bound, jp, K, rel)
    return ChainVerdict(report.xi, t0, delta_dt, i_f, r_omega, bound, jp, jp_fd, K, links)
