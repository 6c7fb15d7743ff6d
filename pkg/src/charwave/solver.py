"""Characteristic (semi-Lagrangian) solver for the Riemann-invariant system.

The state is ``r = u_t + G(u_x)`` and ``s = u_t - G(u_x)`` together with
their slopes ``r_x`` and ``s_x``.  ``r`` travels left with speed ``c(u_x)``
and ``s`` travels right; the slopes travel the same way and pick up the
quadratic sources that drive gradient blowup.

A first-order local Lax-Friedrichs scheme for the equivalent p-system
(``v = u_x``, ``w = u_t``) lives here too, as an independent cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .initialdata import InitialData, eval_profile, x_extent
from .tables import SpeedTable, speed_table
from .wavespeed import DomainError, WaveSpeed

log = logging.getLogger(__name__)

STOP_REASONS = ("blowup", "horizon", "admissibility_lost", "boundary_contact")


class SolverError(ValueError):
    """Invalid solver configuration or geometry."""


@dataclass
class SolverConfig:
    """Grid and stopping parameters.

    ``slope_blow_threshold=None`` means ``1e3 * max(1, max|F(0)|)``.
    ``snapshot_cadence=None`` means ``8 * dx``; ``0`` disables snapshots.
    """

    dx: float = 2.0 ** -8
    cfl: float = 0.8
    L: float = 40.0
    slope_blow_threshold: float | None = None
    max_time: float = 10.0
    speed_spline_resolution: int = 4096
    snapshot_cadence: float | None = None
    series_cadence: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise SolverError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.dx > 0:
            raise SolverError(f"dx must be positive, got {self.dx}")
        if not self.L > 0:
            raise SolverError(f"L must be positive, got {self.L}")
        if not self.max_time > 0:
            raise SolverError(f"max_time must be positive, got {self.max_time}")
        if self.slope_blow_threshold is not None and not self.slope_blow_threshold > 0:
            raise SolverError("slope_blow_threshold must be positive")

    @property
    def cadence(self) -> float:
        return 8.0 * self.dx if self.snapshot_cadence is None else self.snapshot_cadence


@dataclass
class RiemannField:
    """Grid snapshot of the invariants and their slopes at time ``t``."""

    t: float
    x_lo: float
    dx: float
    r: np.ndarray
    s: np.ndarray
    rx: np.ndarray
    sx: np.ndarray
    _c_prev: np.ndarray | None = field(default=None, repr=False)
    _dt_prev: float = field(default=0.0, repr=False)
    bounds: tuple[float, float] | None = None

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(self.n)

    @property
    def domain(self) -> tuple[float, float]:
        """Extent of the full computational domain (the window's own extent if unknown)."""
        if self.bounds is not None:
            return self.bounds
        return self.x_lo, self.x_lo + self.dx * (self.n - 1)

    def window(self, lo: int, hi: int) -> "RiemannField":
        """Copy of nodes ``lo..hi-1``; values beyond it are the edge values."""
        return RiemannField(self.t, self.x_lo + lo * self.dx, self.dx,
                            self.r[lo:hi].copy(), self.s[lo:hi].copy(),
                            self.rx[lo:hi].copy(), self.sx[lo:hi].copy(), bounds=self.domain)

    def padded(self, L: float) -> "RiemannField":
        """Extend to ``[-L, L]`` by repeating edge values (exact for a constant far field)."""
        left = int(round((self.x_lo + L) / self.dx))
        right = int(round((L - (self.x_lo + self.dx * (self.n - 1))) / self.dx))
        if left < 0 or right < 0:
            raise SolverError(f"L = {L} is smaller than the current domain")

        def pad(a):
            return None if a is None else np.pad(a, (left, right), mode="edge")
        return RiemannField(self.t, self.x_lo - left * self.dx, self.dx, pad(self.r), pad(self.s),
                            pad(self.rx), pad(self.sx), pad(self._c_prev), self._dt_prev)


@dataclass
class StopInfo:
    reason: str
    t_stop: float
    x_at_max_slope: float
    max_abs_F: float
    initial_max_F: float = math.nan
    threshold: float = math.nan
    steps: int = 0


class SeriesPoint(NamedTuple):
    t: float
    max_F1: float
    max_F2: float
    ux_inf: float
    r_inf: float
    s_inf: float
    ut_inf: float


def _table(ws: WaveSpeed, cfg: SolverConfig | None) -> SpeedTable:
    res = cfg.speed_spline_resolution if cfg is not None else 4096
    return speed_table(ws, res)


def required_half_width(data: InitialData, ws: WaveSpeed, cfg: SolverConfig) -> float:
    """Smallest L keeping the data's domain of influence off the boundary."""
    c_max = float(np.max(ws.c(np.linspace(-ws.theta_max, ws.theta_max, 401))))
    return x_extent(data) + c_max * cfg.max_time + 5.0 * cfg.dx


def init_field(data: InitialData, ws: WaveSpeed, cfg: SolverConfig) -> RiemannField:
    """Initial invariants and analytic initial slopes on ``[-L, L]``."""
    need = required_half_width(data, ws, cfg)
    if cfg.L < need:
        raise SolverError(
            f"L = {cfg.L} is too small for max_time = {cfg.max_time}: need L >= {need:.6g}"
        )
    data.check_admissible(ws)
    table = _table(ws, cfg)
    n = int(round(2.0 * cfg.L / cfg.dx)) + 1
    x = -cfg.L + cfg.dx * np.arange(n)
    eps = data.epsilon
    psi, psi_x, _ = eval_profile(data.psi, x)
    _, phi_x, phi_xx = eval_profile(data.phi, x)
    theta0 = eps * phi_x
    G0 = table.G(theta0)
    c0 = table.c_of_theta(theta0)
    r = eps * psi + G0
    s = eps * psi - G0
    # chain rule on r = u_t + G(u_x): r_x = eps psi_x + c(eps phi_x) eps phi_xx
    rx = eps * psi_x + c0 * eps * phi_xx
    sx = eps * psi_x - c0 * eps * phi_xx
    for a in (r, s, rx, sx):
        a[np.abs(a) < K.TINY] = 0.0
    return RiemannField(0.0, -cfg.L, cfg.dx, r, s, rx, sx)


def extract_u(fld: RiemannField, ws: WaveSpeed, table: SpeedTable | None = None):
    """Return ``(u_t, u_x)`` at the nodes of ``fld``."""
    table = table or speed_table(ws)
    y = 0.5 * (fld.r - fld.s)
    lo, hi = table.y_range
    if np.any((y < lo) | (y > hi)):
        raise DomainError("field is outside the admissible set: (r - s)/2 exceeds the range of G")
    return 0.5 * (fld.r + fld.s), table.theta_of(y)


class _Stepper:
    """In-place time stepping of one field; owns work buffers and speed arrays."""

    def __init__(self, fld: RiemannField, ws: WaveSpeed, cfg: SolverConfig):
        self.ws = ws
        self.cfg = cfg
        self.tab = _table(ws, cfg)
        t = self.tab
        self.targs = (t.y0, t.dy, t.y_range[1], t.theta, t.dtheta, t.cy, t.dcy, t.code, t.prm)
        self.t = fld.t
        self.x_lo, self.dx = fld.x_lo, fld.dx
        self.r, self.s, self.rx, self.sx = K.as_f64(fld.r.copy(), fld.s.copy(),
                                                    fld.rx.copy(), fld.sx.copy())
        n = self.r.size
        self.ux = np.empty(n)
        self.c = np.empty(n)
        self.k = np.empty(n)
        ok = K.node_state(self.r, self.s, 0, n, *self.targs, self.ux, self.c, self.k)
        if not ok:
            raise DomainError("initial field is outside the admissible set")
        self.c_prev = fld._c_prev.copy() if fld._c_prev is not None else None
        self.dt_prev = fld._dt_prev
        self.buf = [np.empty(n) for _ in range(7)]
        self.mbuf = [np.zeros(n) for _ in range(4)]
        self.c_half = self.c.copy()
        self.steps = 0
        self.last = None
        self.lo, self.hi = K.active_range(self.r, self.s, self.rx, self.sx)

    def F(self):
        sq = np.sqrt(self.c)
        return sq * self.rx, sq * self.sx

    def next_dt(self) -> float:
        lo, hi = self.lo, self.hi
        cmax = max(self.c[0], self.c[-1])
        if hi > lo:
            cmax = max(cmax, float(np.max(self.c[lo:hi])))
        return self.cfg.cfl * self.dx / cmax

    def advance(self, dt: float):
        lo, hi = K.active_range(self.r, self.s, self.rx, self.sx)
        self.lo, self.hi = lo, hi
        n = self.r.size
        if hi > lo:
            a, b = max(lo - 1, 0), min(hi + 1, n)
            if self.c_prev is not None and self.dt_prev > 0:
                w = 0.5 * dt / self.dt_prev
                self.c_half[a:b] = self.c[a:b] + w * (self.c[a:b] - self.c_prev[a:b])
            else:
                self.c_half[a:b] = self.c[a:b]
            rn, sn, rxn, sxn, uxn, cn, kn = self.buf
            res = K.sl_step(self.r, self.s, self.rx, self.sx, self.c_half, self.k,
                            lo, hi, self.dx, dt, *self.targs,
                            rn, sn, rxn, sxn, uxn, cn, kn, *self.mbuf)
            if self.c_prev is None:
                self.c_prev = self.c.copy()
            else:
                self.c_prev[lo:hi] = self.c[lo:hi]
            self.r[lo:hi] = rn[lo:hi]
            self.s[lo:hi] = sn[lo:hi]
            self.rx[lo:hi] = rxn[lo:hi]
            self.sx[lo:hi] = sxn[lo:hi]
            self.ux[lo:hi] = uxn[lo:hi]
            self.c[lo:hi] = cn[lo:hi]
            self.k[lo:hi] = kn[lo:hi]
            self.last = res
        else:
            if self.c_prev is None:
                self.c_prev = self.c.copy()
            self.last = (True, 0.0, 0, 0.0, 0, 0.0, 0.0, 0.0, 0.0)
        self.dt_prev = dt
        self.t += dt
        self.steps += 1
        return self.last

    def point(self) -> "SeriesPoint":
        """Series sample; after a step only the updated nodes and the edges are scanned."""
        if self.last is None:
            F1, F2 = self.F()
            ut = 0.5 * (self.r + self.s)
            return SeriesPoint(self.t, float(np.max(np.abs(F1))), float(np.max(np.abs(F2))),
                               float(np.max(np.abs(self.ux))), float(np.max(np.abs(self.r))),
                               float(np.max(np.abs(self.s))), float(np.max(np.abs(ut))))
        _, f1, _, f2, _, ux, rm, sm, utm = self.last
        vals = [f1, f2, ux, rm, sm, utm]
        for j in (0, -1):
            sq = math.sqrt(self.c[j])
            edge = (sq * abs(self.rx[j]), sq * abs(self.sx[j]), abs(self.ux[j]),
                    abs(self.r[j]), abs(self.s[j]), 0.5 * abs(self.r[j] + self.s[j]))
            vals = [max(a, b) for a, b in zip(vals, edge)]
        return SeriesPoint(self.t, *(float(v) for v in vals))

    def boundary_touched(self, scale_inv: float, scale_sl: float, width: int = 8) -> bool:
        for f, sc in ((self.r, scale_inv), (self.s, scale_inv),
                      (self.rx, scale_sl), (self.sx, scale_sl)):
            tol = 1e-12 * max(sc, 1e-300)
            if np.ptp(f[:width]) > tol or np.ptp(f[-width:]) > tol:
                return True
        return False

    def field(self) -> RiemannField:
        return RiemannField(self.t, self.x_lo, self.dx, self.r.copy(), self.s.copy(),
                            self.rx.copy(), self.sx.copy(),
                            None if self.c_prev is None else self.c_prev.copy(), self.dt_prev)

    def snapshot(self) -> RiemannField:
        lo, hi = self.lo, self.hi
        if hi <= lo:
            lo, hi = 0, min(4, self.r.size)
        lo, hi = max(lo - 4, 0), min(hi + 4, self.r.size)
        return RiemannField(self.t, self.x_lo + lo * self.dx, self.dx,
                            self.r[lo:hi].copy(), self.s[lo:hi].copy(),
                            self.rx[lo:hi].copy(), self.sx[lo:hi].copy(),
                            bounds=(self.x_lo, self.x_lo + self.dx * (self.r.size - 1)))


def step(fld: RiemannField, ws: WaveSpeed, cfg: SolverConfig,
         dt: float | None = None) -> RiemannField:
    """Advance ``fld`` by one step of ``cfl * dx / max c`` (or ``dt``)."""
    st = _Stepper(fld, ws, cfg)
    dt = st.next_dt() if dt is None else dt
    ok = st.advance(dt)[0]
    if not ok:
        raise DomainError("admissibility lost: (r - s)/2 left the range of G")
    return st.field()


def run_until_stop(data: InitialData, ws: WaveSpeed, cfg: SolverConfig,
                   snapshots: list | None = None,
                   land_on: tuple[float, ...] = (),
                   fld: RiemannField | None = None,
                   initial_max_F: float | None = None):
    """Step until blowup, the horizon, loss of admissibility or boundary contact.

    Parameters
    ----------
    snapshots : list, optional
        If given, windowed :class:`RiemannField` copies are appended every
        ``cfg.cadence`` time units (plus the first and last states).
    land_on : tuple of float
        Extra times the step size is clipped to hit exactly; snapshots are
        always taken there.
    fld : RiemannField, optional
        Resume from this state instead of the initial data.
    initial_max_F : float, optional
        ``max|F|`` at time zero when resuming, so the default threshold is
        the same as for an uninterrupted run.

    Returns
    -------
    final : RiemannField
    info : StopInfo
    series : list of SeriesPoint
    """
    fld = init_field(data, ws, cfg) if fld is None else fld
    st = _Stepper(fld, ws, cfg)
    F1, F2 = st.F()
    f0 = float(max(np.max(np.abs(F1)), np.max(np.abs(F2))))
    if initial_max_F is not None:
        f0 = float(initial_max_F)
    thresh = cfg.slope_blow_threshold or 1e3 * max(1.0, f0)
    r_sc = float(max(np.max(np.abs(st.r)), np.max(np.abs(st.s)), 1e-300))
    sl_sc = float(max(np.max(np.abs(st.rx)), np.max(np.abs(st.sx)), 1e-300))

    series = [st.point()]
    cadence = cfg.cadence
    take = snapshots is not None and cadence > 0
    next_snap = st.t + cadence
    last_snap = st.t
    if take:
        snapshots.append(st.snapshot())
    next_series = st.t + cfg.series_cadence
    marks = sorted(t for t in set(land_on) | {cfg.max_time} if t > st.t)
    reason = "horizon"
    while True:
        dt = st.next_dt()
        hit = None
        if marks and st.t + dt >= marks[0] - 1e-12 * max(1.0, marks[0]):
            hit = marks.pop(0)
            dt = hit - st.t
        ok, f1, i1, f2, i2 = st.advance(dt)[:5]
        landed = hit is not None
        if landed:
            st.t = hit
        if st.t >= next_series:
            series.append(st.point())
            next_series = st.t + cfg.series_cadence
        if take and (st.t >= next_snap or landed):
            snapshots.append(st.snapshot())
            last_snap = st.t
            if st.t >= next_snap:
                next_snap = st.t + cadence
        if not ok:
            reason = "admissibility_lost"
            break
        if max(f1, f2) >= thresh:
            reason = "blowup"
            break
        if st.boundary_touched(r_sc, sl_sc):
            reason = "boundary_contact"
            break
        if st.t >= cfg.max_time:
            reason = "horizon"
            break
    if series[-1].t != st.t:
        series.append(st.point())
    if take and last_snap != st.t:
        snapshots.append(st.snapshot())
    F1, F2 = st.F()
    a1, a2 = np.abs(F1), np.abs(F2)
    j = int(np.argmax(a1)) if a1.max() >= a2.max() else int(np.argmax(a2))
    fmax = float(max(a1.max(), a2.max()))
    info = StopInfo(reason, st.t, st.x_lo + j * st.dx, fmax, f0, thresh, st.steps)
    log.debug("stop %s at t=%.6g after %d steps (max|F|=%.4g)", reason, st.t, st.steps, fmax)
    return st.field(), info, series


# -- p-system reference ------------------------------------------------------

def reference_step_psystem(v: np.ndarray, w: np.ndarray, ws: WaveSpeed, dt: float, dx: float,
                           table: SpeedTable | None = None):
    """One local Lax-Friedrichs step for ``v_t = w_x``, ``w_t = c(v)^2 v_x``."""
    table = table or speed_table(ws)
    ws.check_domain(v)
    cv = np.asarray(ws.c(v), dtype=float)
    if dt * float(np.max(cv)) > dx * (1 + 1e-12):
        raise SolverError(f"CFL violated: dt * max c = {dt * np.max(cv):.6g} > dx = {dx:.6g}")
    v, w = K.as_f64(v, w)
    Pv = np.ascontiguousarray(table.P(v))
    v_new = np.empty_like(v)
    w_new = np.empty_like(w)
    K.llf_step(v, w, np.ascontiguousarray(cv), Pv, dt, dx, v_new, w_new)
    return v_new, w_new


def reference_F(v, w, ws: WaveSpeed, dx: float, table: SpeedTable | None = None):
    """Scaled slopes ``sqrt(c) r_x`` and ``sqrt(c) s_x`` from p-system state."""
    table = table or speed_table(ws)
    G = table.G(v)
    r, s = w + G, w - G
    sq = np.sqrt(ws.c(v))
    return sq * np.gradient(r, dx), sq * np.gradient(s, dx)


def run_reference(data: InitialData, ws: WaveSpeed, dx: float, L: float, t_end: float,
                  cfl: float = 0.9, threshold: float | None = None):
    """Run the p-system reference to ``t_end`` or until max|F| crosses ``threshold``.

    Returns ``(x, v, w, t, crossed)``.
    """
    table = speed_table(ws)
    n = int(round(2.0 * L / dx)) + 1
    x = -L + dx * np.arange(n)
    _, phi_x, _ = eval_profile(data.phi, x)
    psi, _, _ = eval_profile(data.psi, x)
    v = data.epsilon * phi_x
    w = data.epsilon * psi
    t = 0.0
    crossed = False
    while t < t_end * (1 - 1e-14):
        cmax = float(np.max(ws.c(v)))
        dt = min(cfl * dx / cmax, t_end - t)
        v, w = reference_step_psystem(v, w, ws, dt, dx, table)
        t += dt
        if threshold is not None:
            F1, F2 = reference_F(v, w, ws, dx, table)
            if max(np.max(np.abs(F1)), np.max(np.abs(F2))) >= threshold:
                crossed = True
                break
    return x, v, w, t, crossed


def snapshot_rows(fld: RiemannField, ws: WaveSpeed, table: SpeedTable | None = None):
    """Rows ``t,x,r,s,rx,sx,ux,ut,c`` for the snapshot CSV."""
    ut, ux = extract_u(fld, ws, table)
    c = ws.c(ux)
    x = fld.x
    for i in range(fld.n):
        yield (fld.t, x[i], fld.r[i], fld.s[i], fld.rx[i], fld.sx[i], ux[i], ut[i], c[i])


SNAPSHOT_HEADER = ("t", "x", "r", "s", "rx", "sx", "ux", "ut", "c")
