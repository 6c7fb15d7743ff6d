"""Epsilon sweeps, lifespan surrogates and scaling-law fits.

Each sweep entry runs the grid solver from the scaled data while a bank of
characteristic traces (both families, seeded across the region where the
initial slope ``F`` is positive) rides along.  Two lifespan surrogates come
out of every entry: the grid threshold-crossing time and the earliest pole
predicted from the traces.

Entries are run in two phases.  A pilot run to ``riccati_time`` produces a
pole prediction; depending on ``surrogate`` mode the entry then either stops
there (Riccati surrogate only) or continues on the grid, on a domain padded
out to cover ``horizon_factor`` times the predicted pole.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import linregress

from .characteristics import MultiTracer, SnapshotTap, predict_pole
from .initialdata import InitialData, eval_profile, scan_interval
from .solver import SolverConfig, SolverError, required_half_width, run_until_stop
from .tables import speed_table
from .wavespeed import WaveSpeed

log = logging.getLogger(__name__)

RECORD_HEADER = ("epsilon", "t_star_grid", "t_star_riccati", "stop_reason", "x_blowup",
                 "dx_used", "runtime_seconds")
SURROGATE_MODES = ("auto", "never", "always")


class FitError(ValueError):
    """Not enough usable records, or invalid fit input."""


@dataclass
class LifespanRecord:
    """Lifespan surrogates for one amplitude.

    ``stop_reason`` is the grid solver's reason, ``surrogate`` when only the
    Riccati pole was computed, or ``error: ...`` for a failed entry.
    """

    epsilon: float
    t_star_grid: float | None
    t_star_riccati: float | None
    stop_reason: str
    x_blowup: float | None
    dx_used: float
    runtime_seconds: float
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def t_star(self, source: str = "auto") -> float | None:
        if source == "grid":
            return self.t_star_grid
        if source == "riccati":
            return self.t_star_riccati
        if source == "auto":
            return self.t_star_grid if self.t_star_grid is not None else self.t_star_riccati
        raise ValueError(f"unknown lifespan source {source!r}")


@dataclass
class SweepOptions:
    """Policy knobs for :func:`sweep`.

    Parameters
    ----------
    surrogate : {"auto", "never", "always"}
        ``always`` stops every entry after the pilot; ``never`` always
        continues on the grid; ``auto`` continues only when the predicted
        pole is at most ``grid_time_cap`` (default: the solver's
        ``max_time``).
    riccati_time : float
        Length of the pilot run feeding the pole prediction.
    horizon_factor : float
        Grid horizon as a multiple of the predicted pole.
    seeds_per_family : int
        Trace seeds per characteristic family.
    tail : float
        Fraction of trace samples used by the pole fit.
    workers : int or None
        Process count; ``None`` uses all available CPUs.
    """

    surrogate: str = "auto"
    riccati_time: float = 30.0
    grid_time_cap: float | None = None
    horizon_factor: float = 4.0
    seeds_per_family: int = 48
    tail: float = 0.25
    workers: int | None = None

    def __post_init__(self):
        if self.surrogate not in SURROGATE_MODES:
            raise ValueError(f"surrogate must be one of {SURROGATE_MODES}, got {self.surrogate!r}")
        if not self.riccati_time > 0:
            raise ValueError("riccati_time must be positive")
        if not self.horizon_factor >= 1:
            raise ValueError("horizon_factor must be at least 1")
        if self.seeds_per_family < 1:
            raise ValueError("seeds_per_family must be at least 1")


@dataclass
class PoleEstimate:
    t_pole: float | None
    x_pole: float | None
    family: str | None = None
    seed: float | None = None


def seed_points(data: InitialData, ws: WaveSpeed, family: str, count: int,
                floor: float = 1e-3) -> np.ndarray:
    """Seeds spread over the region where the initial ``F`` of ``family`` is positive.

    Points where ``F`` is below ``floor`` times its maximum are skipped.
    """
    lo, hi = scan_interval(data)
    x = np.linspace(lo, hi, 8001)
    eps = data.epsilon
    _, psi_x, _ = eval_profile(data.psi, x)
    _, phi_x, phi_xx = eval_profile(data.phi, x)
    c = ws.c(np.clip(eps * phi_x, -ws.theta_max, ws.theta_max))
    sign = 1.0 if family == "minus" else -1.0
    F = np.sqrt(c) * eps * (psi_x + sign * c * phi_xx)
    if not np.max(F) > 0:
        return np.empty(0)
    ok = F >= floor * np.max(F)
    xs = x[ok]
    return np.linspace(xs.min(), xs.max(), count) if count > 1 else xs[[np.argmax(F[ok])]]


def earliest_pole(tracers: Sequence[MultiTracer], tail: float = 0.25,
                  max_confidence: float = 0.05) -> PoleEstimate:
    """Smallest predicted pole over all traces whose fit is trustworthy."""
    best = PoleEstimate(None, None)
    for tr in tracers:
        sign = tr.sign
        for trace in tr.traces():
            pred = predict_pole(trace, tail)
            if pred.t_pole is None or not pred.confidence <= max_confidence:
                continue
            if best.t_pole is None or pred.t_pole < best.t_pole:
                last = trace.samples[-1]
                c = float(tr.ws.c(last.ux))
                xp = last.x + sign * c * max(pred.t_pole - last.t, 0.0)
                best = PoleEstimate(pred.t_pole, xp, trace.family, trace.seed[1])
    return best


def run_diagnostics(series, initial_max_F: float) -> dict:
    """Summary of a grid run's series: invariant drift and blowup character.

    ``r_drift``/``s_drift`` are the largest relative deviations of
    ``max|r|``/``max|s|`` from their initial values, ``F_ratio`` is the final
    ``max|F|`` over its initial value and ``ux_ratio`` the final ``max|u_x|``
    over its median across the run.
    """
    if not series:
        return {}
    a = np.asarray(series, dtype=float)
    out = {}
    for k, name in ((4, "r_drift"), (5, "s_drift")):
        ref = a[0, k]
        out[name] = float(np.max(np.abs(a[:, k] - ref)) / ref) if ref > 0 else 0.0
    out["F_ratio"] = float(max(a[-1, 1], a[-1, 2]) / initial_max_F)
    med = float(np.median(a[:, 3]))
    out["ux_ratio"] = float(a[-1, 3] / med) if med > 0 else math.inf
    out["t_end"] = float(a[-1, 0])
    return out


def _entry(data: InitialData, ws: WaveSpeed, cfg: SolverConfig, opts: SweepOptions) -> LifespanRecord:
    eps = data.epsilon
    t_start = time.perf_counter()
    table = speed_table(ws, cfg.speed_spline_resolution)
    tracers = [MultiTracer(ws, fam, seed_points(data, ws, fam, opts.seeds_per_family), table=table)
               for fam in ("minus", "plus")]
    tracers = [t for t in tracers if t.x.size]
    cap = opts.grid_time_cap if opts.grid_time_cap is not None else cfg.max_time
    pilot_time = min(opts.riccati_time, cfg.max_time) if opts.surrogate != "never" else opts.riccati_time
    run_cfg = replace(cfg, max_time=pilot_time, snapshot_cadence=cfg.cadence or 8.0 * cfg.dx)
    run_cfg = replace(run_cfg, L=max(cfg.L, required_half_width(data, ws, run_cfg)))
    tap = SnapshotTap(*tracers)
    fld, info, series = run_until_stop(data, ws, run_cfg, snapshots=tap)
    series = list(series)
    pole = earliest_pole(tracers, opts.tail)

    if info.reason == "horizon":
        if opts.surrogate == "always" or (opts.surrogate == "auto" and pole.t_pole is not None
                                          and pole.t_pole > cap):
            return LifespanRecord(eps, None, pole.t_pole, "surrogate", pole.x_pole, cfg.dx,
                                  time.perf_counter() - t_start,
                                  run_diagnostics(series, info.initial_max_F))
        horizon = cfg.max_time
        if pole.t_pole is not None:
            horizon = max(horizon if opts.surrogate == "never" else 0.0,
                          opts.horizon_factor * pole.t_pole)
        if horizon > fld.t:
            cont = replace(run_cfg, max_time=horizon)
            cont = replace(cont, L=max(run_cfg.L, required_half_width(data, ws, cont)))
            fld, info, more = run_until_stop(data, ws, cont, snapshots=tap,
                                             fld=fld.padded(cont.L), initial_max_F=info.initial_max_F)
            series.extend(more[1:])
            pole = earliest_pole(tracers, opts.tail)

    t_grid = float(info.t_stop) if info.reason == "blowup" else None
    x_blow = float(info.x_at_max_slope) if info.reason == "blowup" else pole.x_pole
    return LifespanRecord(eps, t_grid, pole.t_pole, info.reason, x_blow, cfg.dx,
                          time.perf_counter() - t_start, run_diagnostics(series, info.initial_max_F))


def _job(args) -> LifespanRecord:
    data, ws, cfg, opts = args
    try:
        return _entry(data, ws, cfg, opts)
    except (SolverError, ValueError, ArithmeticError) as exc:
        log.warning("sweep entry eps=%g failed: %s", data.epsilon, exc)
        return LifespanRecord(data.epsilon, None, None, f"error: {exc}", None, cfg.dx, 0.0)


def sweep(data_template: InitialData, ws: WaveSpeed, cfg: SolverConfig,
          epsilons: Sequence[float], options: SweepOptions | None = None) -> list[LifespanRecord]:
    """Lifespan records for every amplitude, sorted by decreasing epsilon.

    Failed entries are kept with their failure in ``stop_reason``; they never
    abort the sweep.
    """
    opts = options or SweepOptions()
    eps = sorted({float(e) for e in epsilons}, reverse=True)
    if not eps or eps[-1] <= 0:
        raise ValueError("epsilons must be positive")
    for e in eps:
        data_template.with_epsilon(e).check_admissible(ws)
    jobs = [(data_template.with_epsilon(e), ws, cfg, opts) for e in eps]
    workers = opts.workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) == 1:
        records = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            records = list(pool.map(_job, jobs))
    return sorted(records, key=lambda r: -r.epsilon)


# -- records I/O --------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_records(path, records: Sequence[LifespanRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in RECORD_HEADER])


def read_records(path) -> list[LifespanRecord]:
    """Parse a records CSV; blank cells become ``None``."""
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        missing = set(RECORD_HEADER) - set(rd.fieldnames or ())
        if missing:
            raise FitError(f"records file {path} lacks columns: {', '.join(sorted(missing))}")
        for row in rd:
            def num(k):
                v = row[k].strip()
                return float(v) if v else None
            out.append(LifespanRecord(float(row["epsilon"]), num("t_star_grid"), num("t_star_riccati"),
                                      row["stop_reason"], num("x_blowup"), float(row["dx_used"]),
                                      float(row["runtime_seconds"])))
    return out


# -- fits -------------------------------------------------------------------

@dataclass
class FitResult:
    """Least-squares line through transformed (epsilon, lifespan) points.

    ``power``: ``log T = slope * log eps + intercept``.
    ``exponential``: ``log T = slope * eps^(-1/(s-1)) + intercept``.
    """

    model: str
    slope: float
    intercept: float
    r_squared: float
    residuals: tuple[float, ...] = field(default_factory=tuple)
    n_points: int = 0
    source: str = "auto"

    @property
    def exponent_or_slope(self) -> float:
        return self.slope

    def summary(self) -> dict:
        return {"model": self.model, "slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "n_points": self.n_points}

    def to_kv(self) -> str:
        lines = []
        for k, v in self.summary().items():
            if isinstance(v, str):
                lines.append(f'{k} = "{v}"')
            elif isinstance(v, int):
                lines.append(f"{k} = {v}")
            else:
                lines.append(f"{k} = {format(v, '.17g')}")
        return "\n".join(lines) + "\n"

    def report(self) -> str:
        law = ("log T* = slope * log eps + intercept" if self.model == "power"
               else "log T* = slope * eps^(-1/(s-1)) + intercept")
        res = ", ".join(f"{r:+.3e}" for r in self.residuals)
        return (f"model:      {self.model} ({law})\n"
                f"source:     {self.source}\n"
                f"points:     {self.n_points}\n"
                f"slope:      {self.slope:.17g}\n"
                f"intercept:  {self.intercept:.17g}\n"
                f"r_squared:  {self.r_squared:.17g}\n"
                f"residuals:  {res}\n")


def _usable(records: Sequence[LifespanRecord], source: str):
    pts = [(r.epsilon, r.t_star(source)) for r in records]
    pts = [(e, t) for e, t in pts if t is not None and math.isfinite(t) and t > 0 and e > 0]
    if len(pts) < 4:
        raise FitError(f"fewer than 4 usable records ({len(pts)} with a finite lifespan)")
    return np.array(pts).T


def _line(model: str, x, y, source: str) -> FitResult:
    if np.ptp(x) == 0:
        raise FitError("all records share one epsilon")
    lr = linregress(x, y)
    r2 = min(max(float(lr.rvalue) ** 2, 0.0), 1.0)
    resid = y - (lr.slope * x + lr.intercept)
    return FitResult(model, float(lr.slope), float(lr.intercept), r2,
                     tuple(float(v) for v in resid), int(x.size), source)


def fit_power(records: Sequence[LifespanRecord], source: str = "auto") -> FitResult:
    """Fit ``T* = C eps^slope`` in log-log coordinates.

    ``source`` picks the lifespan surrogate: ``grid``, ``riccati`` or
    ``auto`` (grid time when present, otherwise the pole).
    """
    eps, T = _usable(records, source)
    return _line("power", np.log(eps), np.log(T), source)


def fit_exponential(records: Sequence[LifespanRecord], s: float, source: str = "auto") -> FitResult:
    """Fit ``T* = C exp(slope * eps^(-1/(s-1)))``."""
    if not s > 1:
        raise FitError(f"s must exceed 1, got {s}")
    eps, T = _usable(records, source)
    return _line("exponential", eps ** (-1.0 / (s - 1.0)), np.log(T), source)
