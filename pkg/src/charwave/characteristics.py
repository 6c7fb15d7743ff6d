"""Characteristic tracing, the Riccati slope ODE and pole extrapolation.

A trace follows ``dx/dt = -c`` (family ``minus``, along which ``r`` is
constant) or ``dx/dt = +c`` (family ``plus``, along which ``s`` is constant)
through a sequence of field snapshots, and integrates ``dF/dt = gamma F^2``
alongside, where ``F = sqrt(c) r_x`` on minus traces and ``sqrt(c) s_x`` on
plus traces.  The slope ODE is integrated in the projective form
``F = F0 / Q`` with ``Q' = -gamma F0``, which stays regular through the
pole (``Q`` simply crosses zero).  Snapshot values are interpolated with cubic Lagrange
polynomials in ``x`` and linearly in ``t``.

Tracers are online consumers: :class:`MultiTracer` accepts snapshots one at a
time (it can be handed to the solver in place of a snapshot list), so long
runs never need to keep more than two snapshots in memory.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .solver import RiemannField
from .tables import SpeedTable, speed_table
from .wavespeed import WaveSpeed

FAMILIES = ("plus", "minus")
TRACE_HEADER = ("t", "x", "invariant", "ux", "c_prime", "gamma", "F")
MAX_GAP_CELLS = 10.0


class TraceError(ValueError):
    """A trace left the domain or the snapshots are too sparse."""


class TraceSample(NamedTuple):
    t: float
    x: float
    invariant: float
    ux: float
    c_prime: float
    gamma: float
    F: float


@dataclass
class CharTrace:
    """Samples of one characteristic at the snapshot times it crossed.

    ``status`` is ``complete`` when the trace reached the last snapshot,
    ``pole`` when the integrated ``F`` ran through its singularity, and
    ``domain_exit`` when the curve left the computational domain.
    """

    family: str
    seed: tuple[float, float]
    samples: list[TraceSample] = field(default_factory=list)
    status: str = "complete"

    def column(self, name: str) -> np.ndarray:
        j = TRACE_HEADER.index(name)
        return np.array([s[j] for s in self.samples], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def x(self) -> np.ndarray:
        return self.column("x")

    @property
    def F(self) -> np.ndarray:
        return self.column("F")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for smp in self.samples:
                w.writerow([format(float(v), ".17g") for v in smp])


@dataclass(frozen=True)
class RiccatiPrediction:
    """Pole of the affine fit of ``1/F`` over the tail of a trace.

    ``confidence`` is the largest fit residual relative to the range of
    ``1/F`` in the window (smaller is better).
    """

    t_pole: float | None
    gamma_eff: float
    confidence: float


class Onset(NamedTuple):
    t_onset: float | None
    kappa_witness: float


def _cubic(f: np.ndarray, x_lo: float, dx: float, X: np.ndarray) -> np.ndarray:
    """Four-point Lagrange interpolation with constant extension beyond the ends."""
    n = f.size
    u = np.clip((X - x_lo) / dx, -1.0, float(n))
    i = np.floor(u).astype(np.int64)
    t = u - i
    idx = np.clip(i[:, None] + np.arange(-1, 3), 0, n - 1)
    v = f[idx]
    tm1, tp1, tm2 = t - 1.0, t + 1.0, t - 2.0
    w = np.stack([-t * tm1 * tm2 / 6.0, tp1 * tm1 * tm2 / 2.0,
                  -tp1 * t * tm2 / 2.0, tp1 * t * tm1 / 6.0], axis=1)
    return np.sum(w * v, axis=1)


class _Frame:
    """Interpolation helper for one snapshot."""

    def __init__(self, snap: RiemannField, family: str):
        self.t = float(snap.t)
        self.snap = snap
        self.y = np.ascontiguousarray(0.5 * (snap.r - snap.s), dtype=float)
        self.inv = snap.r if family == "minus" else snap.s
        self.slope = snap.rx if family == "minus" else snap.sx

    def at(self, which: str, X: np.ndarray) -> np.ndarray:
        return _cubic(getattr(self, which), self.snap.x_lo, self.snap.dx, X)


class MultiTracer:
    """Integrate a batch of same-family characteristics online.

    Parameters
    ----------
    ws : WaveSpeed
    family : {"plus", "minus"}
    seeds_x : sequence of float
        Starting positions at time ``t0``.
    t0 : float
        Common seed time.
    strict : bool
        Raise :class:`TraceError` on domain exit instead of ending the
        affected trace.
    substeps : int
        Classical Runge-Kutta steps per snapshot interval.
    """

    def __init__(self, ws: WaveSpeed, family: str, seeds_x: Sequence[float], t0: float = 0.0,
                 *, strict: bool = False, substeps: int = 2, table: SpeedTable | None = None):
        if family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
        if substeps < 1:
            raise ValueError("substeps must be at least 1")
        self.ws = ws
        self.table = table or speed_table(ws)
        tb = self.table
        self.targs = (tb.y0, tb.dy, tb.y_range[1], tb.theta, tb.dtheta, tb.cy, tb.dcy, tb.code, tb.prm)
        self.family = family
        self.sign = 1.0 if family == "plus" else -1.0
        self.x = np.asarray(seeds_x, dtype=float).copy()
        self.t0 = float(t0)
        self.strict = strict
        self.substeps = int(substeps)
        self.F = np.full(self.x.size, np.nan)
        self.F0 = np.full(self.x.size, np.nan)
        self.Q = np.ones(self.x.size)
        self.alive = np.ones(self.x.size, dtype=bool)
        self.started = False
        self.prev: _Frame | None = None
        self.traces_ = [CharTrace(family, (self.t0, float(x0))) for x0 in self.x]
        self.bounds: tuple[float, float] | None = None

    def _state(self, a: _Frame, b: _Frame, t: float, X: np.ndarray):
        """Local ``(theta, c, c', gamma)`` at time ``t`` between frames ``a`` and ``b``."""
        lam = 0.0 if b.t == a.t else (t - a.t) / (b.t - a.t)
        X = np.ascontiguousarray(X, dtype=float)
        out = [np.empty(X.size) for _ in range(4)]
        K.trace_state(a.y, a.snap.x_lo, a.snap.dx, b.y, b.snap.x_lo, b.snap.dx, lam, X,
                      *self.targs, *out)
        return out

    def _rhs(self, a, b, t, X, F0):
        _, c, _, g = self._state(a, b, t, X)
        return self.sign * c, -g * F0

    def _record(self, a: _Frame, b: _Frame, t: float):
        idx = np.flatnonzero(self.alive)
        if idx.size == 0:
            return
        X = self.x[idx]
        lam = 0.0 if b.t == a.t else (t - a.t) / (b.t - a.t)
        th, _, cp, g = self._state(a, b, t, X)
        inv = a.at("inv", X) if lam == 0.0 else (1.0 - lam) * a.at("inv", X) + lam * b.at("inv", X)
        for k, j in enumerate(idx):
            self.traces_[j].samples.append(TraceSample(t, float(X[k]), float(inv[k]), float(th[k]),
                                                       float(cp[k]), float(g[k]), float(self.F[j])))

    def _check_domain(self):
        lo, hi = self.bounds
        out = self.alive & ((self.x < lo) | (self.x > hi))
        if out.any():
            if self.strict:
                raise TraceError(f"trace left the domain [{lo:.6g}, {hi:.6g}] at x = "
                                 f"{float(self.x[np.argmax(out)]):.6g}")
            for j in np.flatnonzero(out):
                self.traces_[j].status = "domain_exit"
            self.alive &= ~out

    def _start(self, a: _Frame, b: _Frame):
        lam = 0.0 if b.t == a.t else (self.t0 - a.t) / (b.t - a.t)
        self.bounds = tuple(float(v) for v in b.snap.domain)
        self._check_domain()
        if self.strict and not self.alive.all():
            raise TraceError("seed lies outside the domain")
        _, c, _, _ = self._state(a, b, self.t0, self.x)
        sl = (1.0 - lam) * a.at("slope", self.x) + lam * b.at("slope", self.x)
        self.F = np.sqrt(c) * sl
        self.F0 = self.F.copy()
        self.started = True
        self._record(a, b, self.t0)

    def append(self, snap: RiemannField) -> None:
        """Advance every live trace to the time of ``snap``."""
        fr = _Frame(snap, self.family)
        a = self.prev
        if a is not None and fr.t <= a.t:
            return
        self.prev = fr
        if a is None:
            if fr.t == self.t0:
                self._start(fr, fr)
            elif fr.t > self.t0:
                raise TraceError(f"snapshots start at t = {fr.t:.6g}, after the seed time {self.t0:.6g}")
            return
        if not self.started:
            if fr.t < self.t0:
                return
            self._start(a, fr)
        if fr.t - max(a.t, self.t0) > MAX_GAP_CELLS * snap.dx * (1 + 1e-12):
            raise TraceError(f"snapshot gap {fr.t - a.t:.6g} exceeds {MAX_GAP_CELLS:g} dx "
                             f"= {MAX_GAP_CELLS * snap.dx:.6g}")
        t = max(a.t, self.t0)
        if fr.t <= t:
            return
        idx = np.flatnonzero(self.alive)
        if idx.size == 0:
            return
        X, Q, F0 = self.x[idx], self.Q[idx], self.F0[idx]
        h = (fr.t - t) / self.substeps
        for _ in range(self.substeps):
            k1x, k1q = self._rhs(a, fr, t, X, F0)
            k2x, k2q = self._rhs(a, fr, t + 0.5 * h, X + 0.5 * h * k1x, F0)
            k3x, k3q = self._rhs(a, fr, t + 0.5 * h, X + 0.5 * h * k2x, F0)
            k4x, k4q = self._rhs(a, fr, t + h, X + h * k3x, F0)
            X = X + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            Q = Q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
            t += h
        self.x[idx] = X
        self.Q[idx] = Q
        # the pole is where Q reaches zero
        F = np.where(Q > 0, F0 / np.where(Q > 0, Q, 1.0), np.nan)
        self.F[idx] = F
        dead = idx[np.isnan(F)]
        for j in dead:
            self.traces_[j].status = "pole"
        self.alive[dead] = False
        self._check_domain()
        self._record(fr, fr, fr.t)

    def traces(self) -> list[CharTrace]:
        return self.traces_


class SnapshotTap:
    """List-like sink that forwards each snapshot to online consumers.

    Pass it as the ``snapshots`` argument of the solver; with ``keep=True``
    the snapshots are stored as well.
    """

    def __init__(self, *consumers, keep: bool = False):
        self.consumers = list(consumers)
        self.keep = keep
        self.items: list[RiemannField] = []
        self.count = 0

    def append(self, snap: RiemannField) -> None:
        self.count += 1
        if self.keep:
            self.items.append(snap)
        for c in self.consumers:
            c.append(snap)

    def __len__(self):
        return self.count


def trace_with_riccati(snapshots: Iterable[RiemannField], family: str, seed: tuple[float, float],
                       ws: WaveSpeed, *, substeps: int = 2) -> CharTrace:
    """Trace one characteristic from ``seed = (t0, x0)`` through ``snapshots``.

    Raises
    ------
    TraceError
        If the trace leaves the domain, the seed time is not covered, or two
        consecutive snapshots are more than ``10 dx`` apart in time.
    """
    t0, x0 = seed
    tr = MultiTracer(ws, family, [x0], t0, strict=True, substeps=substeps)
    for snap in snapshots:
        tr.append(snap)
    if not tr.started:
        raise TraceError(f"snapshots do not cover the seed time {t0}")
    return tr.traces()[0]


def riccati_closed_form(F0: float, gamma: float, t):
    """Solution ``F0 / (1 - gamma F0 t)`` of ``F' = gamma F^2`` and its pole.

    Returns ``(F, t_pole)``; ``t_pole`` is ``None`` unless ``gamma F0 > 0``.
    """
    den = 1.0 - gamma * F0 * np.asarray(t, dtype=float)
    if np.any(den == 0.0):
        raise ZeroDivisionError("evaluation at the pole of the Riccati solution")
    F = F0 / den
    pole = 1.0 / (gamma * F0) if gamma * F0 > 0 else None
    return (float(F) if np.ndim(F) == 0 else F), pole


def predict_pole(trace: CharTrace, tail: float = 0.25, min_samples: int = 10) -> RiccatiPrediction:
    """Extrapolate the blowup time from the affine behaviour of ``1/F``.

    The last ``tail`` fraction of the samples (at least ``min_samples``)
    is fitted by least squares; the pole is the root of the fitted line.
    No pole is reported unless ``F`` is positive and strictly increasing over
    the window and the fitted line decreases.
    """
    if not 0.0 < tail <= 1.0:
        raise ValueError(f"tail fraction must lie in (0, 1], got {tail}")
    t, F = trace.t, trace.F
    keep = np.isfinite(F)
    t, F = t[keep], F[keep]
    none = RiccatiPrediction(None, math.nan, math.nan)
    if t.size < min_samples:
        return none
    k = max(min_samples, int(math.ceil(tail * t.size)))
    t, F = t[-k:], F[-k:]
    if np.any(F <= 0) or np.any(np.diff(F) <= 0):
        return none
    q = 1.0 / F
    slope, icpt = np.polyfit(t, q, 1)
    resid = q - (slope * t + icpt)
    span = float(np.ptp(q))
    conf = float(np.max(np.abs(resid)) / span) if span > 0 else math.inf
    if not slope < 0:
        return RiccatiPrediction(None, float(-slope), conf)
    return RiccatiPrediction(float(-icpt / slope), float(-slope), conf)


def onset_diagnostic(trace: CharTrace, ws: WaveSpeed, p: float, epsilon: float,
                     tail: float = 0.5) -> Onset:
    """Onset time after which ``c'(u_x) >= kappa eps^(p-2)`` holds for good.

    ``kappa`` is the smallest value of ``c'(u_x) / eps^(p-2)`` over the
    last ``tail`` fraction of the trace; the onset is the earliest sample
    from which that bound holds at every later sample.  Returns
    ``Onset(None, kappa)`` when no positive bound exists.
    """
    if trace.samples == []:
        return Onset(None, 0.0)
    t = trace.t
    cp = np.nan_to_num(np.asarray(ws.c_prime(trace.column("ux")), dtype=float), posinf=0.0)
    ratio = cp / epsilon ** (p - 2.0)
    suffix = np.minimum.accumulate(ratio[::-1])[::-1]
    start = min(int(len(ratio) * (1.0 - tail)), len(ratio) - 1)
    kappa = float(suffix[start])
    if not kappa > 0:
        return Onset(None, max(kappa, 0.0))
    k = int(np.argmax(suffix >= kappa))
    return Onset(float(t[k]), float(suffix[k]))

