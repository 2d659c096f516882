"""Compiled inner loops for the Muskat right-hand side and the pair scan.

All loops parallelize over output rows only; every output entry is reduced
in a fixed node order, so results do not depend on the thread count.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def bicubic_pairs(fpad, pad, f, gx, gy, idx0, wt0, idx1, wt1, h0, h1, rr, w, out, slope):
    """Accumulate the symmetrized integrand over node pairs +h, -h.

    ``idx*[m, s]`` and ``wt*[m, s, :]`` hold the integer offset and the four
    Catmull-Rom weights of node m along each axis, s = 0 for +h and 1 for -h.
    ``slope[i]`` receives the largest |delta| / |h| seen on row i.
    """
    n = f.shape[0]
    M = h0.shape[0]
    for i in prange(n):
        row = np.empty(n + 3)
        vals = np.empty((2, n))
        smax = 0.0
        for m in range(M):
            for s in range(2):
                a0 = i + idx0[m, s] - 1 + pad
                c0 = idx1[m, s] - 1 + pad
                wa0 = wt0[m, s, 0]
                wa1 = wt0[m, s, 1]
                wa2 = wt0[m, s, 2]
                wa3 = wt0[m, s, 3]
                for c in range(n + 3):
                    cc = c0 + c
                    row[c] = wa0 * fpad[a0, cc] + wa1 * fpad[a0 + 1, cc] + wa2 * fpad[a0 + 2, cc] + wa3 * fpad[a0 + 3, cc]
                wb0 = wt1[m, s, 0]
                wb1 = wt1[m, s, 1]
                wb2 = wt1[m, s, 2]
                wb3 = wt1[m, s, 3]
                for j in range(n):
                    vals[s, j] = wb0 * row[j] + wb1 * row[j + 1] + wb2 * row[j + 2] + wb3 * row[j + 3]
            r2 = rr[m]
            rinv = 1.0 / np.sqrt(r2)
            wm = w[m]
            hx = h0[m]
            hy = h1[m]
            for j in range(n):
                fc = f[i, j]
                dp = vals[0, j] - fc
                dm = vals[1, j] - fc
                gh = gx[i, j] * hx + gy[i, j] * hy
                a = dp * dp + r2
                b = dm * dm + r2
                out[i, j] += wm * ((dp - gh) / (a * np.sqrt(a)) + (dm + gh) / (b * np.sqrt(b)))
                sp = abs(dp) * rinv
                sm = abs(dm) * rinv
                if sp > smax:
                    smax = sp
                if sm > smax:
                    smax = sm
        slope[i] = max(slope[i], smax)


@njit(cache=True, parallel=True)
def shifted_pairs(f, fp, fm, gx, gy, h0, h1, rr, w, out, slope):
    """Same accumulation with precomputed shifted copies ``fp[m] = f(x + h_m)``, ``fm[m] = f(x - h_m)``."""
    n = f.shape[0]
    M = h0.shape[0]
    for i in prange(n):
        smax = 0.0
        for m in range(M):
            r2 = rr[m]
            rinv = 1.0 / np.sqrt(r2)
            wm = w[m]
            for j in range(n):
                fc = f[i, j]
                dp = fp[m, i, j] - fc
                dm = fm[m, i, j] - fc
                gh = gx[i, j] * h0[m] + gy[i, j] * h1[m]
                a = dp * dp + r2
                b = dm * dm + r2
                out[i, j] += wm * ((dp - gh) / (a * np.sqrt(a)) + (dm + gh) / (b * np.sqrt(b)))
                sp = abs(dp) * rinv
                sm = abs(dm) * rinv
                if sp > smax:
                    smax = sp
                if sm > smax:
                    smax = sm
        slope[i] = max(slope[i], smax)


@njit(cache=True, parallel=True)
def pair_scan(f, period, nu, j, cap, out_min, out_arg):
    """Minimum over grid pairs of omega(|x - y|) - (f(x) - f(y)).

    Distances are torus distances; pairs at distance zero or at least
    ``cap`` are skipped.  Row i of ``out_min``/``out_arg`` holds the best
    value and the (dx, dy) offset for base points x in row i.
    """
    n = f.shape[0]
    dx = period / n
    c = 2.0 ** 1.5
    for i in prange(n):
        best = np.inf
        b0 = 0
        b1 = 0
        b2 = 0
        for a in range(n):
            da = min(a, n - a) * dx
            for b in range(n):
                if a == 0 and b == 0:
                    continue
                db = min(b, n - b) * dx
                d = np.sqrt(da * da + db * db)
                if d >= cap:
                    continue
                if d <= 2.0:
                    om = j + nu * (d - d * np.sqrt(d) / c)
                elif d <= 2.0 / nu:
                    om = j + 0.5 * nu * d
                else:
                    om = j + 1.0
                ii = (i + a) % n
                for k in range(n):
                    val = om - (f[i, k] - f[ii, (k + b) % n])
                    if val < best:
                        best = val
                        b0 = k
                        b1 = a
                        b2 = b
        out_min[i] = best
        out_arg[i, 0] = b0
        out_arg[i, 1] = b1
        out_arg[i, 2] = b2
