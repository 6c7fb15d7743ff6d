"""Cubic Hermite tables of G, G^-1, c and the p-system potential.

The tables use exact node derivatives (``dtheta/dy = 1/c``, ``dG/dtheta = c``,
``dP/dtheta = c^2``), so the interpolation error is fourth order in the node
spacing.  Node values come from a high-accuracy ODE integration outward from
the origin, and every table is checked against direct quadrature at
construction time.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .wavespeed import WaveSpeed, WaveSpeedError, invert_G

KIND_CODES = {"constant": 0, "power_sqrt": 1, "exp_power": 2, "double_power": 3, "gevrey_flat": 4}

TABLE_TOL = 1e-9
_MAX_DOUBLINGS = 4


def kind_params(ws: WaveSpeed) -> np.ndarray:
    """Flat parameter vector consumed by the compiled ``c'`` evaluator."""
    p = ws._p
    out = np.zeros(6)
    if ws.kind in ("power_sqrt",):
        out[:2] = p["A"], p["p"]
    elif ws.kind == "exp_power":
        out[:2] = p["C"], p["p"]
    elif ws.kind == "double_power":
        out[:4] = p["A"], p["B"], p["p"], p["q"]
    elif ws.kind == "gevrey_flat":
        sp = p["s_prime"] if p["s_prime"] is not None else 2.0
        out[:6] = p["C1"], p["C2"], p["s"], p["alpha"], p["C3"], sp
    return out


def _integrate(rhs, y0, grid):
    """Integrate ``rhs`` from 0 to every point of a grid containing 0."""
    out = np.empty((len(y0), grid.size))
    zero = int(np.argmin(np.abs(grid)))
    out[:, zero] = y0
    for sl in (slice(zero, None), slice(zero, None, -1)):
        pts = grid[sl]
        if pts.size < 2:
            continue
        sol = solve_ivp(rhs, (pts[0], pts[-1]), y0, method="DOP853", t_eval=pts,
                        rtol=1e-13, atol=1e-15)
        if not sol.success:
            raise WaveSpeedError(f"table integration failed: {sol.message}")
        out[:, sl] = sol.y
    return out


def hermite(x0, h, vals, slopes, x):
    """Evaluate a uniform-grid cubic Hermite table at ``x`` (vectorised)."""
    x = np.asarray(x, dtype=float)
    u = (x - x0) / h
    k = np.clip(np.floor(u).astype(np.int64), 0, vals.size - 2)
    t = u - k
    t2, t3 = t * t, t * t * t
    return (vals[k] + (vals[k + 1] - vals[k]) * (3 * t2 - 2 * t3)
            + h * (slopes[k] * (t3 - 2 * t2 + t) + slopes[k + 1] * (t3 - t2)))


@dataclass(frozen=True, eq=False)
class SpeedTable:
    """Precomputed lookup tables for one :class:`WaveSpeed`.

    ``y`` grid (uniform in ``G``): ``theta`` with slope ``1/c`` and ``c`` with
    slope ``c'/c``.  ``theta`` grid (uniform in the gradient): ``G`` with
    slope ``c`` and the potential ``P = int c^2`` with slope ``c^2``.
    """

    ws: WaveSpeed
    y0: float
    dy: float
    theta: np.ndarray
    dtheta: np.ndarray
    cy: np.ndarray
    dcy: np.ndarray
    t0: float
    dt: float
    Gt: np.ndarray
    ct: np.ndarray
    Pt: np.ndarray
    cpt: np.ndarray
    code: int
    prm: np.ndarray
    max_error: float

    @property
    def y_range(self) -> tuple[float, float]:
        return self.y0, self.y0 + self.dy * (self.theta.size - 1)

    def theta_of(self, y):
        return np.where(np.asarray(y) == 0.0, 0.0,
                        hermite(self.y0, self.dy, self.theta, self.dtheta, y))

    def c_of_y(self, y):
        return hermite(self.y0, self.dy, self.cy, self.dcy, y)

    def G(self, theta):
        return np.where(np.asarray(theta) == 0.0, 0.0,
                        hermite(self.t0, self.dt, self.Gt, self.ct, theta))

    def c_of_theta(self, theta):
        return np.where(np.asarray(theta) == 0.0, 1.0,
                        hermite(self.t0, self.dt, self.ct, self.cpt, theta))

    def P(self, theta):
        return hermite(self.t0, self.dt, self.Pt, self.ct ** 2, theta)


def _build(ws: WaveSpeed, resolution: int) -> SpeedTable:
    tm = ws.theta_max
    flat = ws.kind == "gevrey_flat"

    # theta grid: G' = c, P' = c^2, and for flat speeds c' = g
    half = resolution // 2
    tgrid = tm * np.arange(-half, half + 1) / half
    if flat:
        def rhs_t(th, z):
            c = z[0]
            return [float(ws.g(th)), c, c * c]
        sol = _integrate(rhs_t, [1.0, 0.0, 0.0], tgrid)
        ct, Gt, Pt = sol
    else:
        ct = ws.c(tgrid)

        def rhs_t(th, z):
            c = float(ws.c(th))
            return [c, c * c]
        Gt, Pt = _integrate(rhs_t, [0.0, 0.0], tgrid)

    # uniform grid with the origin as a node, inside [G(-theta_max), G(theta_max)]
    y_lo, y_hi = ws.G_range
    step = (y_hi - y_lo) / resolution
    ygrid = step * np.arange(-np.floor(-y_lo / step), np.floor(y_hi / step) + 1)
    if flat:
        def rhs_y(y, z):
            th, c = z
            return [1.0 / c, float(ws.g(np.clip(th, -tm, tm))) / c]
        th, cy = _integrate(rhs_y, [0.0, 1.0], ygrid)
    else:
        def rhs_y(y, z):
            return [1.0 / float(ws.c(np.clip(z[0], -tm, tm)))]
        (th,) = _integrate(rhs_y, [0.0], ygrid)
        cy = ws.c(np.clip(th, -tm, tm))
    cp_y = np.nan_to_num(ws.c_prime(th), posinf=0.0)
    table = SpeedTable(
        ws=ws, y0=float(ygrid[0]), dy=float(ygrid[1] - ygrid[0]),
        theta=th, dtheta=1.0 / cy, cy=cy, dcy=cp_y / cy,
        t0=float(tgrid[0]), dt=float(tgrid[1] - tgrid[0]), Gt=Gt, ct=ct, Pt=Pt,
        cpt=np.nan_to_num(ws.c_prime(tgrid), posinf=0.0),
        code=KIND_CODES[ws.kind], prm=kind_params(ws), max_error=0.0,
    )
    return table


def _check(table: SpeedTable) -> float:
    ws = table.ws
    tm = ws.theta_max
    probes = np.linspace(-tm, tm, 34)[1:-1] + 0.37 * table.dt
    probes = probes[np.abs(probes) <= tm]
    err = 0.0
    for th in probes:
        g = ws.G(th)
        err = max(err, abs(float(table.G(th)) - g) / max(1.0, abs(g)))
    lo, hi = ws.G_range
    for y in np.linspace(lo, hi, 34)[1:-1] + 0.41 * table.dy:
        if not lo <= y <= hi:
            continue
        th = invert_G(ws, y)
        err = max(err, abs(float(table.theta_of(y)) - th) / max(1.0, abs(th)))
    return err


@lru_cache(maxsize=32)
def speed_table(ws: WaveSpeed, resolution: int = 4096) -> SpeedTable:
    """Build (and cache) the validated lookup table for ``ws``.

    The resolution is doubled until the check against direct quadrature
    meets ``TABLE_TOL``; a :class:`WaveSpeedError` is raised if it never does.
    """
    res = int(resolution)
    for _ in range(_MAX_DOUBLINGS + 1):
        table = _build(ws, res)
        err = _check(table)
        if err <= TABLE_TOL:
            object.__setattr__(table, "max_error", err)
            return table
        res *= 2
    raise WaveSpeedError(
        f"speed table for {ws.kind} failed to reach {TABLE_TOL:g} (error {err:.3g})"
    )
