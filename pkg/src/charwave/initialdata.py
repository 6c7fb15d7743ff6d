"""Initial profiles, initial Riemann invariants and blowup-condition checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .wavespeed import DomainError, WaveSpeed

PROFILE_KINDS = ("zero", "gaussian", "compact_bump", "sine_packet", "tanh")
DECAYING = ("zero", "gaussian", "compact_bump", "sine_packet")


@dataclass(frozen=True)
class Profile:
    """One closed-form profile ``amplitude * f((x - center) / width)``.

    ``sine_packet`` is ``sin(pi z) exp(-z^2 / 2)``; ``compact_bump`` is the
    standard ``exp(-1/(1 - z^2))`` bump supported on ``|z| < 1``.
    """

    kind: str = "zero"
    center: float = 0.0
    width: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not self.width > 0:
            raise ValueError(f"profile width must be positive, got {self.width}")


ProfileLike = Union[Profile, Sequence[Profile]]


def _as_list(pr: ProfileLike) -> list[Profile]:
    return [pr] if isinstance(pr, Profile) else list(pr)


def _eval_one(pr: Profile, x):
    z = (np.asarray(x, dtype=float) - pr.center) / pr.width
    a, w = pr.amplitude, pr.width
    if pr.kind == "zero":
        zero = np.zeros_like(z)
        return zero, zero.copy(), zero.copy()
    if pr.kind == "gaussian":
        e = np.exp(-z * z)
        return a * e, a * (-2 * z * e) / w, a * (4 * z * z - 2) * e / w**2
    if pr.kind == "tanh":
        t = np.tanh(z)
        sech2 = 1.0 - t * t
        return a * t, a * sech2 / w, a * (-2 * t * sech2) / w**2
    if pr.kind == "sine_packet":
        e = np.exp(-0.5 * z * z)
        sn, cs = np.sin(np.pi * z), np.cos(np.pi * z)
        d1 = (np.pi * cs - z * sn) * e
        d2 = (-np.pi**2 * sn - sn - 2 * np.pi * z * cs + z * z * sn) * e
        return a * sn * e, a * d1 / w, a * d2 / w**2
    # compact_bump
    inside = np.abs(z) < 1.0
    zi = np.where(inside, z, 0.0)
    q = 1.0 - zi * zi
    e = np.where(inside, np.exp(-1.0 / q), 0.0)
    d1 = np.where(inside, -2 * zi / q**2 * e, 0.0)
    d2 = np.where(inside, (6 * zi**4 - 2) / q**4 * e, 0.0)
    return a * e, a * d1 / w, a * d2 / w**2


def eval_profile(pr: ProfileLike, x):
    """Value, first and second derivative of a profile (or a sum of profiles)."""
    x = np.asarray(x, dtype=float)
    val = np.zeros_like(x)
    dx = np.zeros_like(x)
    dxx = np.zeros_like(x)
    for p in _as_list(pr):
        v, d1, d2 = _eval_one(p, x)
        val = val + v
        dx = dx + d1
        dxx = dxx + d2
    return val, dx, dxx


def _extent(pr: ProfileLike) -> float:
    out = 0.0
    for p in _as_list(pr):
        if p.kind == "zero":
            continue
        reach = 1.0 if p.kind == "compact_bump" else 10.0
        out = max(out, abs(p.center) + reach * p.width)
    return out


@dataclass(frozen=True)
class InitialData:
    """``u(0) = epsilon * phi`` and ``u_t(0) = epsilon * psi``."""

    phi: ProfileLike
    psi: ProfileLike
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        object.__setattr__(self, "phi", tuple(_as_list(self.phi)))
        object.__setattr__(self, "psi", tuple(_as_list(self.psi)))

    @property
    def decaying(self) -> bool:
        return all(p.kind in DECAYING for p in self.phi + self.psi)

    def max_phi_x(self) -> float:
        lo, hi = scan_interval(self)
        x = np.linspace(lo, hi, 20001)
        return float(np.max(np.abs(eval_profile(self.phi, x)[1])))

    def check_admissible(self, ws: WaveSpeed) -> None:
        """``epsilon * max|phi_x| <= theta_max / 2``."""
        m = self.epsilon * self.max_phi_x()
        if m > 0.5 * ws.theta_max:
            raise DomainError(
                f"epsilon * max|phi_x| = {m:.6g} exceeds theta_max/2 = {0.5 * ws.theta_max:.6g}"
            )

    def with_epsilon(self, eps: float) -> "InitialData":
        return InitialData(self.phi, self.psi, eps)


def x_extent(data: InitialData) -> float:
    """Half-width outside which the data are (numerically) constant."""
    ext = max(_extent(data.phi), _extent(data.psi))
    for p in data.phi + data.psi:
        if p.kind == "tanh":
            # tanh saturates to +-1 in double precision beyond |z| ~ 19.1
            ext = max(ext, abs(p.center) + 20.0 * p.width)
    return ext


def scan_interval(data: InitialData) -> tuple[float, float]:
    lo, hi = math.inf, -math.inf
    for p in data.phi + data.psi:
        if p.kind == "zero":
            continue
        lo = min(lo, p.center - 10 * p.width)
        hi = max(hi, p.center + 10 * p.width)
    if lo > hi:
        return -1.0, 1.0
    return lo, hi


def riemann_initial(data: InitialData, ws: WaveSpeed, x):
    """``(r0, s0) = (eps psi + G(eps phi_x), eps psi - G(eps phi_x))``."""
    x = np.asarray(x, dtype=float)
    eps = data.epsilon
    psi = eval_profile(data.psi, x)[0]
    theta = eps * eval_profile(data.phi, x)[1]
    ws.check_domain(theta)
    G = np.vectorize(ws.G, otypes=[float])(theta) if theta.ndim else ws.G(float(theta))
    return eps * psi + G, eps * psi - G


@dataclass
class ConditionReport:
    """Witnesses for the blowup conditions and the global-existence sign test.

    ``blowup_i`` is a point with ``psi_x + phi_xx > 0`` (and
    ``psi + phi_x != 0``), ``blowup_ii`` one with ``psi_x - phi_xx > 0`` (and
    ``psi - phi_x != 0``).  ``global_sign`` is true when
    ``psi_x +- c(eps phi_x) phi_xx <= 0`` everywhere on the scan grid.
    """

    blowup_i: float | None
    margin_i: float
    blowup_ii: float | None
    margin_ii: float
    global_sign: bool
    global_margin: float
    decaying: bool

    @property
    def usable_for_blowup(self) -> bool:
        return self.decaying and (self.blowup_i is not None or self.blowup_ii is not None)


def _critical_points(data: InitialData) -> list[float]:
    pts = []
    for p in data.phi + data.psi:
        if p.kind == "gaussian":
            for z in (0.0, 1 / math.sqrt(2), -1 / math.sqrt(2), math.sqrt(1.5), -math.sqrt(1.5)):
                pts.append(p.center + z * p.width)
    return pts


def _margins(data: InitialData, x):
    _, psi_x, _ = eval_profile(data.psi, x)
    _, _, phi_xx = eval_profile(data.phi, x)
    return psi_x + phi_xx, psi_x - phi_xx


def _nondegenerate(data: InitialData, x, sign: float):
    psi = eval_profile(data.psi, x)[0]
    phi_x = eval_profile(data.phi, x)[1]
    return np.abs(psi + sign * phi_x) > 1e-12


def _best(data: InitialData, grid, which: int, sign: float):
    m = _margins(data, grid)[which]
    m = np.where(_nondegenerate(data, grid, sign), m, -np.inf)
    j = int(np.argmax(m))
    if not m[j] > 0:
        return None, float(np.max(_margins(data, grid)[which]))
    x0 = float(grid[j])
    h = float(np.min(np.diff(np.unique(grid)))) if grid.size > 1 else 1.0
    res = minimize_scalar(lambda x: -_margins(data, x)[which], bounds=(x0 - 2 * h, x0 + 2 * h),
                          method="bounded", options={"xatol": 1e-12})
    xr = float(res.x)
    mr = float(_margins(data, xr)[which])
    if mr >= m[j] and bool(_nondegenerate(data, xr, sign)):
        return xr, mr
    return x0, float(m[j])


def classify_conditions(data: InitialData, ws: WaveSpeed, n: int = 10_000) -> ConditionReport:
    """Search for blowup-condition witnesses and test the global sign condition."""
    segments = []
    for p in data.phi + data.psi:
        if p.kind != "zero":
            segments.append(np.linspace(p.center - 10 * p.width, p.center + 10 * p.width, n))
    grid = np.concatenate(segments + [np.array(_critical_points(data))]) if segments \
        else np.linspace(-1.0, 1.0, n)
    grid = np.unique(grid)
    xi, mi = _best(data, grid, 0, 1.0)
    xii, mii = _best(data, grid, 1, -1.0)

    eps = data.epsilon
    _, psi_x, _ = eval_profile(data.psi, grid)
    _, phi_x, phi_xx = eval_profile(data.phi, grid)
    theta = np.clip(eps * phi_x, -ws.theta_max, ws.theta_max)
    cphi = ws.c(theta) * phi_xx
    gm = float(max(np.max(psi_x + cphi), np.max(psi_x - cphi)))
    return ConditionReport(xi, mi, xii, mii, gm <= 0.0, gm, data.decaying)
