"""Far-field part (|h| > R) of the Muskat integral on a periodic grid.

For |h| > R the slope delta/|h| is small, so the integrand is expanded in
powers of delta^2/|h|^2.  Each term is a convolution of a power of f with a
truncated radial kernel, applied as a Fourier multiplier:

    m3(k)  = int_{|h|>R} e^{ik.h} |h|^-3 dh = 2 pi k I2(kR)
    m5(k)  = int_{|h|>R} e^{ik.h} |h|^-5 dh = 2 pi k^3 I4(kR)
    n5(k)  = int_{|h|>R} e^{ik.h} h |h|^-5 dh = i khat 2 pi k^2 K3(kR)

with I2, I4, K3 the tails of J0/u^2, J0/u^4 and J1/u^3 on (a, inf).
"""

from __future__ import annotations

import numpy as np
from scipy import special


def int_j0(a):
    """int_0^a J0(u) du via the Struve-function identity.

    (``scipy.special.itj0y0`` loses all accuracy for a above roughly 20.)
    """
    a = np.asarray(a, dtype=float)
    j0, j1 = special.j0(a), special.j1(a)
    return a * j0 + 0.5 * np.pi * a * (j1 * special.struve(0, a) - j0 * special.struve(1, a))


def tail_I2(a):
    """int_a^inf J0(u)/u^2 du for a > 0."""
    a = np.asarray(a, dtype=float)
    # integrate by parts, then int_0^a J1/u = int_0^a J0 - J1(a)
    return special.j0(a) / a - (1.0 - int_j0(a) + special.j1(a))


def tail_K3(a):
    """int_a^inf J1(u)/u^3 du for a > 0."""
    a = np.asarray(a, dtype=float)
    return (special.j1(a) / a**2 + tail_I2(a)) / 3.0


def tail_I4(a):
    """int_a^inf J0(u)/u^4 du for a > 0."""
    a = np.asarray(a, dtype=float)
    return special.j0(a) / (3.0 * a**3) - tail_K3(a) / 3.0


def multipliers(kx, ky, R):
    """Return (m3, m5, n5x, n5y) on the wavevector grid; entries at k = 0 are the limits."""
    k = np.hypot(kx, ky)
    zero = k == 0
    ks = np.where(zero, 1.0, k)
    a = ks * R
    m3 = np.where(zero, 2.0 * np.pi / R, 2.0 * np.pi * ks * tail_I2(a))
    m5 = np.where(zero, 2.0 * np.pi / (3.0 * R**3), 2.0 * np.pi * ks**3 * tail_I4(a))
    n5 = np.where(zero, 0.0, 2.0 * np.pi * ks**2 * tail_K3(a))
    n5x = 1j * np.where(zero, 0.0, kx / ks) * n5
    n5y = 1j * np.where(zero, 0.0, ky / ks) * n5
    return m3, m5, n5x, n5y


class FarField:
    """Precomputed multipliers for one grid and outer radius."""

    def __init__(self, kx, ky, R: float):
        self.R = float(R)
        self.m3, self.m5, self.n5x, self.n5y = multipliers(kx, ky, R)
        self.m3_0 = 2.0 * np.pi / self.R
        self.m5_0 = 2.0 * np.pi / (3.0 * self.R**3)

    def _conv(self, mult, v):
        return np.fft.ifft2(mult * np.fft.fft2(v)).real

    def linear(self, f):
        """int_{|h|>R} (f(x+h) - f(x)) / |h|^3 dh (the gradient term integrates to zero)."""
        return self._conv(self.m3 - self.m3_0, f)

    def quadratic(self, f, gx, gy):
        """Next term: -(3/2) int delta^3/|h|^5 + (3/2) g . int h delta^2/|h|^5."""
        f2 = f * f
        f3 = f2 * f
        s3 = self._conv(self.m5, f3) - 3.0 * f * self._conv(self.m5, f2) + 3.0 * f2 * self._conv(self.m5, f) - f3 * self.m5_0
        F = np.fft.fft2(f)
        F2 = np.fft.fft2(f2)
        vx = np.fft.ifft2(self.n5x * F2).real - 2.0 * f * np.fft.ifft2(self.n5x * F).real
        vy = np.fft.ifft2(self.n5y * F2).real - 2.0 * f * np.fft.ifft2(self.n5y * F).real
        return -1.5 * s3 + 1.5 * (gx * vx + gy * vy)



def remainder_budget(mode: str, R: float, osc: float, gmax: float) -> float:
    """Bound on the part of the far-field integral not captured by ``mode``.

    ``osc`` bounds |delta| and ``gmax`` the gradient; the bounds follow from
    |(1+x)^-1.5 - sum of the kept terms| <= (next coefficient) x^k.
    """
    q = osc / R
    if mode == "budget":
        return 2.0 * np.pi * osc / R + 1.5 * np.pi * gmax * q * q
    if mode == "linear":
        return np.pi * q**3 + 1.5 * np.pi * gmax * q * q
    if mode == "quadratic":
        return 0.75 * np.pi * q**5 + (15.0 * np.pi / 16.0) * gmax * q**4
    raise ValueError(f"unknown tail mode {mode!r}")
