"""Compiled inner loops for the characteristic solver.

Everything here works on plain float arrays; index arguments are clamped to
the array so out-of-range reads implement constant extension.
"""
import math

import numpy as np
from numba import njit

TINY = 1e-200


@njit(cache=True, error_model="numpy")
def cprime(code, prm, th, c):
    """c'(theta) for a kind code; ``c`` is the already-known speed value."""
    a = abs(th)
    if code == 0:
        return 0.0
    if code == 1:
        return prm[0] * (prm[1] - 1.0) * a ** (prm[1] - 2.0) / (2.0 * c)
    if code == 2:
        return prm[0] * (prm[1] - 1.0) * a ** (prm[1] - 2.0) * c
    if code == 3:
        return (prm[0] * (prm[2] - 1.0) * a ** (prm[2] - 2.0)
                + prm[1] * (prm[3] - 1.0) * a ** (prm[3] - 2.0))
    if a == 0.0:
        return 0.0
    e = -prm[1] * a ** (-1.0 / (prm[2] - 1.0))
    if prm[4] != 0.0:
        e -= prm[4] * a ** (-1.0 / (prm[5] - 1.0))
    return prm[0] * a ** (-prm[3]) * math.exp(e)


@njit(cache=True, error_model="numpy")
def _herm(f0, f1, m0, m1, h, t):
    t2 = t * t
    t3 = t2 * t
    return f0 + (f1 - f0) * (3.0 * t2 - 2.0 * t3) + h * (m0 * (t3 - 2.0 * t2 + t) + m1 * (t3 - t2))


@njit(cache=True, error_model="numpy")
def table_eval(y0, dy, vals, slopes, y):
    u = (y - y0) / dy
    k = int(math.floor(u))
    if k < 0:
        k = 0
    elif k > vals.size - 2:
        k = vals.size - 2
    return _herm(vals[k], vals[k + 1], slopes[k], slopes[k + 1], dy, u - k)


@njit(cache=True, error_model="numpy")
def recover(y, y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm):
    """(theta, c, c') from a value of G; theta is NaN outside the table."""
    if y == 0.0:
        return 0.0, 1.0, cprime(code, prm, 0.0, 1.0)
    if y < y0 or y > y_hi:
        return math.nan, math.nan, math.nan
    th = table_eval(y0, dy, th_v, th_s, y)
    c = table_eval(y0, dy, c_v, c_s, y)
    return th, c, cprime(code, prm, th, c)


@njit(cache=True, error_model="numpy")
def lagrange4(f, x_lo, h, x):
    """Four-point Lagrange interpolation with constant extension beyond the ends."""
    n = f.size
    u = (x - x_lo) / h
    if u < -1.0:
        u = -1.0
    elif u > n:
        u = float(n)
    i = int(math.floor(u))
    t = u - i
    acc = 0.0
    tm1, tp1, tm2 = t - 1.0, t + 1.0, t - 2.0
    w = (-t * tm1 * tm2 / 6.0, tp1 * tm1 * tm2 / 2.0, -tp1 * t * tm2 / 2.0, tp1 * t * tm1 / 6.0)
    for j in range(4):
        idx = min(max(i - 1 + j, 0), n - 1)
        acc += w[j] * f[idx]
    return acc


@njit(cache=True, error_model="numpy")
def trace_state(ya, xa, ha, yb, xb, hb, lam, X, y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm,
                th, c, cp, g):
    """Local (theta, c, c', gamma) at positions X between two snapshots."""
    for j in range(X.size):
        y = lagrange4(ya, xa, ha, X[j])
        if lam != 0.0:
            y = (1.0 - lam) * y + lam * lagrange4(yb, xb, hb, X[j])
        a, b, d = recover(y, y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm)
        if not math.isfinite(d):
            d = 0.0
        th[j] = a
        c[j] = b
        cp[j] = d
        g[j] = d / (2.0 * b * math.sqrt(b))


@njit(cache=True, error_model="numpy")
def _limited(fm2, fm1, f0, fp1, fp2, h):
    sl = f0 - fm1
    sr = fp1 - f0
    base = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / 12.0
    pc = 0.5 * (sl + sr)
    pm = 0.5 * (3.0 * sl - (fm1 - fm2))
    pp = 0.5 * (3.0 * sr - (fp2 - fp1))
    mono = sl * sr > 0.0
    if mono:
        bound = 3.0 * min(abs(sl), abs(sr))
        sgn = math.copysign(1.0, sl)
    else:
        bound = 0.0
        sgn = math.copysign(1.0, pc)
    relax = pc * pm > 0.0 and pc * pp > 0.0
    if relax:
        bound = max(bound, 1.5 * min(abs(pc), abs(pm), abs(pp)))
    if base * sgn > 0.0 and (mono or relax):
        lim = sgn * min(abs(base), bound)
    else:
        lim = 0.0
    if lim != base:
        # a well-resolved extremum: curvature of one sign varying by less
        # than a factor of four over the stencil is left unlimited
        d2m = fm2 - 2.0 * fm1 + f0
        d2c = fm1 - 2.0 * f0 + fp1
        d2p = f0 - 2.0 * fp1 + fp2
        lo2 = min(abs(d2m), abs(d2c), abs(d2p))
        if d2m * d2c > 0.0 and d2c * d2p > 0.0 and max(abs(d2m), abs(d2c), abs(d2p)) <= 4.0 * lo2:
            lim = base
    return lim / h


@njit(cache=True, error_model="numpy")
def mono_slopes(f, lo, hi, h, out):
    """Monotone cubic slopes at nodes ``lo..hi-1``.

    Fourth-order centred estimate, limited by the Fritsch-Carlson bound in
    monotone stretches and by the Dougherty-Edelman-Hyman extension near
    extrema; extrema with smoothly varying curvature keep the centred slope,
    so resolved maxima are not clipped while spikes get zero slope.
    """
    n = f.size
    for i in range(max(lo, 0), min(hi, n)):
        if 2 <= i < n - 2:
            out[i] = _limited(f[i - 2], f[i - 1], f[i], f[i + 1], f[i + 2], h)
        else:
            out[i] = _limited(f[max(i - 2, 0)], f[max(i - 1, 0)], f[i],
                              f[min(i + 1, n - 1)], f[min(i + 2, n - 1)], h)


@njit(cache=True, error_model="numpy")
def active_range(r, s, rx, sx):
    """Half-open node range whose update can differ from the far field."""
    n = r.size
    first = -1
    last = -1
    for j in range(n - 1):
        if r[j] != r[j + 1] or s[j] != s[j + 1] or rx[j] != rx[j + 1] or sx[j] != sx[j + 1]:
            if first < 0:
                first = j
            last = j
    if first < 0:
        return 0, 0
    return max(first - 2, 0), min(last + 4, n)


@njit(cache=True, error_model="numpy")
def node_state(r, s, lo, hi, y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm, ux, c, k):
    """Fill u_x, c and k = c'/(2c) on ``lo..hi-1``; returns False on admissibility loss."""
    ok = True
    for i in range(lo, hi):
        th, ci, cp = recover(0.5 * (r[i] - s[i]), y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm)
        if math.isnan(th):
            ok = False
            th, ci, cp = 0.0, 1.0, 0.0
        ux[i] = th
        c[i] = ci
        k[i] = cp / (2.0 * ci)
    return ok


@njit(cache=True, error_model="numpy")
def sl_step(r, s, rx, sx, c_half, k, lo, hi, h, dt,
            y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm,
            r_new, s_new, rx_new, sx_new, ux_new, c_new, k_new,
            mr, ms, mrx, msx):
    """One semi-Lagrangian step on nodes ``lo..hi-1``.

    r is carried leftward and s rightward along characteristics whose foot
    points are traced with the half-step speed; slopes are carried the same
    way and then receive the Riccati-type sources by a two-stage update.
    Magnitudes below ``TINY`` are flushed to zero so far-field tails stay
    exactly constant instead of decaying through subnormals.
    Returns (ok, max|F1|, argmax F1, max|F2|, argmax F2, max|u_x|, max|r|,
    max|s|, max|u_t|) over the updated nodes.
    """
    n = r.size
    mono_slopes(r, lo - 1, hi + 1, h, mr)
    mono_slopes(s, lo - 1, hi + 1, h, ms)
    mono_slopes(rx, lo - 1, hi + 1, h, mrx)
    mono_slopes(sx, lo - 1, hi + 1, h, msx)
    ok = True
    f1max = 0.0
    f2max = 0.0
    i1 = lo
    i2 = lo
    uxmax = 0.0
    rmax = 0.0
    smax = 0.0
    utmax = 0.0
    for i in range(lo, hi):
        ip = min(i + 1, n - 1)
        im = max(i - 1, 0)
        # minus family: foot at x_i + c dt, inside cell [i, i+1]
        a = dt * c_half[i] / h
        cm = c_half[i] + 0.5 * a * (c_half[ip] - c_half[i])
        tr = min(dt * cm / h, 1.0)
        # plus family: foot at x_i - c dt, inside cell [i-1, i]
        a = dt * c_half[i] / h
        cm = c_half[i] + 0.5 * a * (c_half[im] - c_half[i])
        ts = max(1.0 - dt * cm / h, 0.0)

        rf = _herm(r[i], r[ip], mr[i], mr[ip], h, tr)
        rxf = _herm(rx[i], rx[ip], mrx[i], mrx[ip], h, tr)
        sx_at_r = _herm(sx[i], sx[ip], msx[i], msx[ip], h, tr)
        k_at_r = k[i] + tr * (k[ip] - k[i])

        sf = _herm(s[im], s[i], ms[im], ms[i], h, ts)
        sxf = _herm(sx[im], sx[i], msx[im], msx[i], h, ts)
        rx_at_s = _herm(rx[im], rx[i], mrx[im], mrx[i], h, ts)
        k_at_s = k[im] + ts * (k[i] - k[im])

        src_r = k_at_r * rxf * (rxf - sx_at_r)
        src_s = k_at_s * sxf * (sxf - rx_at_s)

        th, ci, cp = recover(0.5 * (rf - sf), y0, dy, y_hi, th_v, th_s, c_v, c_s, code, prm)
        if math.isnan(th):
            ok = False
            th, ci, cp = 0.0, 1.0, 0.0
        kn = cp / (2.0 * ci)

        rxp = rxf + dt * src_r
        sxp = sxf + dt * src_s
        rxn = rxf + 0.5 * dt * (src_r + kn * rxp * (rxp - sxp))
        sxn = sxf + 0.5 * dt * (src_s + kn * sxp * (sxp - rxp))

        if abs(rf) < TINY:
            rf = 0.0
        if abs(sf) < TINY:
            sf = 0.0
        if abs(rxn) < TINY:
            rxn = 0.0
        if abs(sxn) < TINY:
            sxn = 0.0
        r_new[i] = rf
        s_new[i] = sf
        rx_new[i] = rxn
        sx_new[i] = sxn
        ux_new[i] = th
        c_new[i] = ci
        k_new[i] = kn
        sq = math.sqrt(ci)
        f1 = abs(sq * rxn)
        f2 = abs(sq * sxn)
        if f1 > f1max:
            f1max = f1
            i1 = i
        if f2 > f2max:
            f2max = f2
            i2 = i
        uxmax = max(uxmax, abs(th))
        rmax = max(rmax, abs(rf))
        smax = max(smax, abs(sf))
        utmax = max(utmax, 0.5 * abs(rf + sf))
        if not (math.isfinite(rxn) and math.isfinite(sxn)):
            ok = False
    return ok, f1max, i1, f2max, i2, uxmax, rmax, smax, utmax


@njit(cache=True, error_model="numpy")
def llf_step(v, w, cv, Pv, dt, h, v_new, w_new):
    """Local Lax-Friedrichs update of v_t - w_x = 0, w_t - P(v)_x = 0."""
    n = v.size
    for i in range(n):
        im = max(i - 1, 0)
        ip = min(i + 1, n - 1)
        # interface i+1/2
        ar = max(cv[i], cv[ip])
        fr_v = -0.5 * (w[i] + w[ip]) - 0.5 * ar * (v[ip] - v[i])
        fr_w = -0.5 * (Pv[i] + Pv[ip]) - 0.5 * ar * (w[ip] - w[i])
        al = max(cv[im], cv[i])
        fl_v = -0.5 * (w[im] + w[i]) - 0.5 * al * (v[i] - v[im])
        fl_w = -0.5 * (Pv[im] + Pv[i]) - 0.5 * al * (w[i] - w[im])
        v_new[i] = v[i] - dt / h * (fr_v - fl_v)
        w_new[i] = w[i] - dt / h * (fr_w - fl_w)


def as_f64(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)
