"""Wave-speed families c(theta) and the quantities derived from them.

Every speed is normalised so that ``c(0) == 1``.  Besides ``c`` and ``c'`` a
speed exposes the primitive ``G(theta) = int_0^theta c``, its inverse, and the
Riccati coefficient ``gamma = c' / (2 c^{3/2})``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy import integrate

KINDS = ("constant", "power_sqrt", "exp_power", "double_power", "gevrey_flat")

_REQUIRED = {
    "constant": (),
    "power_sqrt": ("A", "p"),
    "exp_power": ("C", "p"),
    "double_power": ("A", "B", "p", "q"),
    "gevrey_flat": ("C1", "C2", "s"),
}
_OPTIONAL = {
    "gevrey_flat": {"alpha": 0.0, "C3": 0.0, "s_prime": None},
}

C_FLOOR = 0.25


class WaveSpeedError(ValueError):
    """Invalid wave-speed parameters or an argument outside the admissible set."""


class DomainError(WaveSpeedError):
    """Raised when an argument leaves ``[-theta_max, theta_max]`` or the range of G."""


def _sgnpow(theta, a):
    # sign(theta) |theta|^a, the continuous reading of |theta|^(a-1) theta
    return np.sign(theta) * np.abs(theta) ** a


def _abspow(theta, a):
    with np.errstate(divide="ignore"):
        return np.abs(theta) ** a


@dataclass(frozen=True)
class WaveSpeed:
    """A validated wave speed ``c`` on ``[-theta_max, theta_max]``.

    Instances are immutable and hashable; build them with
    :func:`make_wavespeed` so the parameter and floor checks run.
    """

    kind: str
    params: tuple = ()
    theta_max: float = 1.0
    quadrature_tol: float = 1e-12

    def __getitem__(self, name):
        return dict(self.params)[name]

    @cached_property
    def _p(self) -> dict:
        out = dict(_OPTIONAL.get(self.kind, {}))
        out.update(self.params)
        return out

    # -- pointwise formulas -------------------------------------------------

    def g(self, theta):
        """Derivative of the flat speed, ``g = c'`` for the gevrey_flat kind."""
        if self.kind != "gevrey_flat":
            raise WaveSpeedError("g is only defined for gevrey_flat speeds")
        return np.exp(self.log_abs_c_prime(theta))

    def log_abs_c_prime(self, theta):
        """``log|c'(theta)|``, analytic for gevrey_flat so it never underflows."""
        theta = np.asarray(theta, dtype=float)
        if self.kind != "gevrey_flat":
            with np.errstate(divide="ignore"):
                return np.log(np.abs(self.c_prime(theta)))
        p = self._p
        a = np.abs(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                math.log(p["C1"])
                - p["alpha"] * np.log(a)
                - p["C2"] * a ** (-1.0 / (p["s"] - 1.0))
            )
            if p["C3"]:
                out = out - p["C3"] * a ** (-1.0 / (p["s_prime"] - 1.0))
        return np.where(a == 0.0, -np.inf, out)

    def c(self, theta):
        theta = np.asarray(theta, dtype=float)
        k, p = self.kind, self._p
        if k == "constant":
            return np.ones_like(theta)
        if k == "power_sqrt":
            return np.sqrt(1.0 + p["A"] * _sgnpow(theta, p["p"] - 1.0))
        if k == "exp_power":
            return np.exp(p["C"] * _sgnpow(theta, p["p"] - 1.0))
        if k == "double_power":
            return (1.0 + p["A"] * _sgnpow(theta, p["p"] - 1.0)
                    + p["B"] * _sgnpow(theta, p["q"] - 1.0))
        # gevrey_flat: c = 1 + int_0^theta g
        flat = np.vectorize(self._flat_increment, otypes=[float])
        return 1.0 + flat(theta)

    def _flat_increment(self, theta: float) -> float:
        if theta == 0.0:
            return 0.0
        val, _ = integrate.quad(
            lambda t: float(self.g(t)), 0.0, theta,
            epsabs=0.0, epsrel=self.quadrature_tol, limit=200,
        )
        return val

    def c_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        k, p = self.kind, self._p
        if k == "constant":
            return np.zeros_like(theta)
        if k == "power_sqrt":
            return p["A"] * (p["p"] - 1.0) * _abspow(theta, p["p"] - 2.0) / (2.0 * self.c(theta))
        if k == "exp_power":
            return p["C"] * (p["p"] - 1.0) * _abspow(theta, p["p"] - 2.0) * self.c(theta)
        if k == "double_power":
            return (p["A"] * (p["p"] - 1.0) * _abspow(theta, p["p"] - 2.0)
                    + p["B"] * (p["q"] - 1.0) * _abspow(theta, p["q"] - 2.0))
        return self.g(theta)

    def gamma(self, theta):
        """Riccati coefficient ``c'/(2 c^{3/2})``."""
        return self.c_prime(theta) / (2.0 * self.c(theta) ** 1.5)

    def G(self, theta: float) -> float:
        """Primitive ``int_0^theta c``; exact zero at the origin."""
        theta = float(theta)
        if theta == 0.0:
            return 0.0
        k, p = self.kind, self._p
        if k == "constant":
            return theta
        if k == "power_sqrt" and p["p"] == 2.0:
            A = p["A"]
            return 2.0 * ((1.0 + A * theta) ** 1.5 - 1.0) / (3.0 * A)
        if k == "gevrey_flat":
            # repeated integral: int_0^theta (1 + int_0^t g) dt = theta + int_0^theta (theta - t) g(t) dt
            val, _ = integrate.quad(
                lambda t: (theta - t) * float(self.g(t)), 0.0, theta,
                epsabs=0.0, epsrel=self.quadrature_tol, limit=200,
            )
            return theta + val
        val, _ = integrate.quad(
            lambda t: float(self.c(t)), 0.0, theta,
            epsabs=0.0, epsrel=self.quadrature_tol, limit=200,
            points=None,
        )
        return val

    @cached_property
    def G_range(self) -> tuple[float, float]:
        return self.G(-self.theta_max), self.G(self.theta_max)

    def check_domain(self, theta) -> None:
        if np.any(np.abs(theta) > self.theta_max):
            raise DomainError(
                f"|theta| = {np.max(np.abs(theta)):.6g} exceeds theta_max = {self.theta_max}"
            )

    def to_config(self) -> dict:
        out = {"kind": self.kind, "theta_max": self.theta_max,
               "quadrature_tol": self.quadrature_tol}
        out.update(self.params)
        return out


def make_wavespeed(kind: str, params: Mapping[str, float] | None = None,
                   theta_max: float = 1.0, quadrature_tol: float = 1e-12) -> WaveSpeed:
    """Build and validate a :class:`WaveSpeed`.

    Parameters
    ----------
    kind : str
        One of ``constant``, ``power_sqrt``, ``exp_power``, ``double_power``,
        ``gevrey_flat``.
    params : mapping
        Per-kind parameters (``A``, ``B``, ``C``, ``C1``, ``C2``, ``C3``,
        ``p``, ``q``, ``s``, ``s_prime``, ``alpha``).
    theta_max : float
        Half-width of the admissible interval.  ``c >= 1/4`` is checked on a
        dense sample of it.
    """
    if kind not in KINDS:
        raise WaveSpeedError(f"unknown wave-speed kind {kind!r}; expected one of {KINDS}")
    params = {k: v for k, v in dict(params or {}).items() if v is not None}
    allowed = set(_REQUIRED[kind]) | set(_OPTIONAL.get(kind, {}))
    unknown = set(params) - allowed
    if unknown:
        raise WaveSpeedError(f"parameters {sorted(unknown)} do not apply to kind {kind!r}")
    missing = [k for k in _REQUIRED[kind] if k not in params]
    if missing:
        raise WaveSpeedError(f"kind {kind!r} requires parameters {missing}")
    params = {k: float(v) for k, v in params.items()}

    for amp in ("A", "B", "C", "C1", "C2"):
        if amp in params and params[amp] <= 0:
            raise WaveSpeedError(f"{amp} must be positive, got {params[amp]}")
    if "C3" in params and params["C3"] < 0:
        raise WaveSpeedError(f"C3 must be non-negative, got {params['C3']}")
    if "p" in params and params["p"] <= 1:
        raise WaveSpeedError(f"p must exceed 1, got {params['p']}")
    if "q" in params and params["q"] <= params["p"]:
        raise WaveSpeedError(f"q must exceed p, got q={params['q']} p={params['p']}")
    if "s" in params and params["s"] <= 1:
        raise WaveSpeedError(f"s must exceed 1, got {params['s']}")
    if params.get("C3"):
        sp = params.get("s_prime")
        if sp is None or sp <= params["s"]:
            raise WaveSpeedError("a second flat layer needs s_prime > s")
    if not theta_max > 0:
        raise WaveSpeedError(f"theta_max must be positive, got {theta_max}")
    if not 0 < quadrature_tol < 1:
        raise WaveSpeedError(f"quadrature_tol must lie in (0, 1), got {quadrature_tol}")

    ws = WaveSpeed(kind, tuple(sorted(params.items())), float(theta_max), float(quadrature_tol))
    n = 401 if kind == "gevrey_flat" else 4001
    sample = np.linspace(-theta_max, theta_max, n)
    with np.errstate(invalid="ignore"):
        cs = ws.c(sample)
    if not np.all(np.isfinite(cs)) or np.min(cs) < C_FLOOR:
        bad = sample[np.argmin(np.nan_to_num(cs, nan=-np.inf))]
        raise WaveSpeedError(
            f"theta_max = {theta_max} is too large: c drops below {C_FLOOR} near theta = {bad:.4g}"
        )
    return ws


def evaluate(ws: WaveSpeed, theta: float) -> tuple[float, float, float, float]:
    """Return ``(c, c', G, gamma)`` at ``theta``."""
    ws.check_domain(theta)
    c = float(ws.c(theta))
    cp = float(ws.c_prime(theta))
    return c, cp, ws.G(theta), cp / (2.0 * c ** 1.5)


def invert_G(ws: WaveSpeed, y: float, tol: float = 1e-12) -> float:
    """Solve ``G(theta) = y`` on the admissible interval.

    Newton's method from ``theta = y`` (G is close to the identity for small
    data), falling back to bisection whenever a step leaves the bracket.
    """
    y = float(y)
    if y == 0.0:
        return 0.0
    lo_y, hi_y = ws.G_range
    if not lo_y <= y <= hi_y:
        raise DomainError(
            f"G^-1({y:.6g}) is undefined: range of G is [{lo_y:.6g}, {hi_y:.6g}]; "
            "the state has left the small-data regime"
        )
    lo, hi = (-ws.theta_max, 0.0) if y < 0 else (0.0, ws.theta_max)
    theta = min(max(y, lo), hi)
    target = tol * max(1.0, abs(y))
    for _ in range(200):
        f = ws.G(theta) - y
        if abs(f) <= target:
            return theta
        if f > 0:
            hi = theta
        else:
            lo = theta
        step = theta - f / float(ws.c(theta))
        theta = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(theta)):
            return theta
    return theta


@dataclass
class ValidationReport:
    """Grid-sampled check of a structural claim about ``c``.

    ``witness_min``/``witness_max`` are the empirical constants for the
    claimed bound.  ``passed`` is true when every ratio lies in
    ``[lower, upper]``.
    """

    claim: str
    order: float
    thetas: np.ndarray
    ratios: np.ndarray
    witness_min: float
    witness_max: float
    passed: bool
    lower: float = 1e-6
    upper: float = 1e6

    def summary(self) -> str:
        verdict = "pass" if self.passed else "fail"
        return (f"claim {self.claim}={self.order:g}: {verdict} "
                f"(ratio range [{self.witness_min:.6g}, {self.witness_max:.6g}])")


def validate_assumptions(ws: WaveSpeed, claim: str, order: float,
                         levels: int = 40, lower: float = 1e-6,
                         upper: float = 1e6) -> ValidationReport:
    """Check a power-degeneracy or flatness claim on a geometric grid.

    ``claim="power"`` with ``order=p`` tests ``c'(theta) / |theta|^(p-2)``;
    ``claim="flat"`` with ``order=s`` tests
    ``-log|c'(theta)| * |theta|^(1/(s-1))``.  Both signs of theta are sampled
    at ``theta_max * 2^-k`` for ``k = 0..levels``.
    """
    if claim not in ("power", "flat"):
        raise WaveSpeedError(f"claim must be 'power' or 'flat', got {claim!r}")
    k = np.arange(levels + 1)
    pos = ws.theta_max * 2.0 ** (-k)
    thetas = np.concatenate([-pos[::-1], pos])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if claim == "power":
            # one-sided: c' itself, not |c'|, must be bounded below
            ratios = ws.c_prime(thetas) / np.abs(thetas) ** (order - 2.0)
        else:
            ratios = -ws.log_abs_c_prime(thetas) * np.abs(thetas) ** (1.0 / (order - 1.0))
    ratios = np.where(np.isnan(ratios), np.inf, ratios)
    ok = bool(np.all(ratios >= lower) and np.all(ratios <= upper))
    wmin, wmax = float(np.min(ratios)), float(np.max(ratios))
    return ValidationReport(claim, float(order), thetas, ratios, wmin, wmax, ok, lower, upper)
