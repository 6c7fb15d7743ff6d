"""TOML experiment configuration.

A single file describes the speed, the data, the solver grid and the
optional sweep, fit, trace and validation settings::

    epsilon = 0.2
    [wavespeed]
    kind = "power_sqrt"
    A = 1.0
    p = 2.0
    theta_max = 0.9
    [psi]
    kind = "gaussian"
    [solver]
    cfl = 0.95

``phi``/``psi`` may also be arrays of tables (``[[psi]]``), which are summed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .initialdata import InitialData, Profile
from .lifespan import SweepOptions
from .solver import SolverConfig, SolverError, required_half_width
from .wavespeed import WaveSpeed, WaveSpeedError, make_wavespeed

log = logging.getLogger(__name__)

DEFAULT_OUT = "charwave_out"

_TOP = {"out", "workers", "epsilon", "epsilons", "expect_blowup", "wavespeed", "phi", "psi",
        "solver", "fit", "sweep", "trace", "validate"}
_WAVESPEED = {"kind", "theta_max", "quadrature_tol", "A", "p", "C", "B", "q", "C1", "C2", "s",
              "alpha", "C3", "s_prime"}
_PROFILE = {"kind", "center", "width", "amplitude"}
_SOLVER = {f.name for f in fields(SolverConfig)}
_FIT = {"model", "p", "s", "source", "records"}
_SWEEP = {f.name for f in fields(SweepOptions)} - {"workers"}
_TRACE = {"family", "seeds", "tail", "substeps"}
_VALIDATE = {"claim", "order", "levels"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class ExperimentConfig:
    wavespeed: WaveSpeed
    phi: tuple[Profile, ...]
    psi: tuple[Profile, ...]
    solver: SolverConfig
    epsilon: float | None = None
    epsilons: tuple[float, ...] = ()
    sweep: SweepOptions = field(default_factory=SweepOptions)
    fit_model: str | None = None
    fit_order: float | None = None
    fit_source: str = "auto"
    records_path: str | None = None
    trace_family: str | None = None
    trace_seeds: tuple[tuple[float, float], ...] = ()
    trace_tail: float = 0.25
    trace_substeps: int = 2
    validate_claim: str | None = None
    validate_order: float | None = None
    validate_levels: int = 40
    out: str = DEFAULT_OUT
    workers: int | None = None
    expect_blowup: bool | None = None
    L_given: bool = False

    def data(self, eps: float | None = None) -> InitialData:
        e = self.epsilon if eps is None else eps
        if e is None:
            raise ConfigError("epsilon: a single amplitude is required for this command")
        return InitialData(self.phi, self.psi, e)

    def template(self) -> InitialData:
        e = self.epsilons[0] if self.epsilons else self.epsilon
        return InitialData(self.phi, self.psi, e if e is not None else 0.0)


def _check_keys(section: dict, allowed: set, where: str, strict: bool):
    for k in section:
        if k not in allowed:
            name = f"{where}.{k}" if where else k
            if strict:
                raise ConfigError(f"{name}: unknown key")
            log.warning("ignoring unknown config key %s", name)


def _table(raw: dict, key: str) -> dict:
    v = raw.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{key}: expected a table")
    return v


def _num(sec: dict, key: str, where: str, default=None, positive=False):
    if key not in sec:
        return default
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v!r}")
    return float(v)


def _profiles(raw: dict, key: str, strict: bool) -> tuple[Profile, ...]:
    v = raw.get(key, {"kind": "zero"})
    items = v if isinstance(v, list) else [v]
    out = []
    for j, it in enumerate(items):
        where = key if not isinstance(v, list) else f"{key}[{j}]"
        if not isinstance(it, dict):
            raise ConfigError(f"{where}: expected a table")
        _check_keys(it, _PROFILE, where, strict)
        try:
            out.append(Profile(str(it.get("kind", "zero")), _num(it, "center", where, 0.0),
                               _num(it, "width", where, 1.0), _num(it, "amplitude", where, 1.0)))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return tuple(out)


def _wavespeed(raw: dict, strict: bool) -> WaveSpeed:
    if "wavespeed" not in raw:
        raise ConfigError("wavespeed: missing required table")
    sec = _table(raw, "wavespeed")
    _check_keys(sec, _WAVESPEED, "wavespeed", strict)
    if "kind" not in sec:
        raise ConfigError("wavespeed.kind: missing required key")
    params = {k: v for k, v in sec.items() if k not in ("kind", "theta_max", "quadrature_tol")}
    for k in params:
        _num(params, k, "wavespeed")
    try:
        return make_wavespeed(str(sec["kind"]), params, _num(sec, "theta_max", "wavespeed", 1.0, True),
                              _num(sec, "quadrature_tol", "wavespeed", 1e-12, True))
    except WaveSpeedError as exc:
        raise ConfigError(f"wavespeed: {exc}") from None


def _solver(raw: dict, strict: bool) -> tuple[SolverConfig, bool]:
    sec = _table(raw, "solver")
    _check_keys(sec, _SOLVER, "solver", strict)
    kw: dict[str, Any] = {}
    for k in ("dx", "cfl", "L", "max_time", "slope_blow_threshold", "snapshot_cadence", "series_cadence"):
        if k in sec:
            kw[k] = _num(sec, k, "solver")
    if "speed_spline_resolution" in sec:
        v = sec["speed_spline_resolution"]
        if not isinstance(v, int) or isinstance(v, bool) or v < 8:
            raise ConfigError(f"solver.speed_spline_resolution: expected an integer >= 8, got {v!r}")
        kw["speed_spline_resolution"] = v
    try:
        return SolverConfig(**kw), "L" in sec
    except SolverError as exc:
        raise ConfigError(f"solver: {exc}") from None


def parse_config(text: str, strict: bool = False) -> ExperimentConfig:
    """Parse and validate a TOML experiment description.

    Defaults are filled in, cross-field consistency (domain size versus
    horizon, admissibility of every amplitude) is checked, and every error
    names the key it concerns.  With ``strict`` unknown keys are errors,
    otherwise they are logged and ignored.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    _check_keys(raw, _TOP, "", strict)
    ws = _wavespeed(raw, strict)
    phi = _profiles(raw, "phi", strict)
    psi = _profiles(raw, "psi", strict)
    solver, L_given = _solver(raw, strict)

    eps = _num(raw, "epsilon", "", None)
    if eps is not None and not eps > 0:
        raise ConfigError(f"epsilon: must be positive, got {eps}")
    epsilons: tuple[float, ...] = ()
    if "epsilons" in raw:
        v = raw["epsilons"]
        if not isinstance(v, list) or not v:
            raise ConfigError("epsilons: expected a non-empty array of numbers")
        epsilons = tuple(_num({"epsilons": e}, "epsilons", "", positive=True) for e in v)

    cfg = ExperimentConfig(ws, phi, psi, solver, eps, epsilons, L_given=L_given)

    if "out" in raw:
        cfg.out = str(raw["out"])
    if "workers" in raw:
        w = raw["workers"]
        if not isinstance(w, int) or isinstance(w, bool) or w < 1:
            raise ConfigError(f"workers: expected a positive integer, got {w!r}")
        cfg.workers = w
    if "expect_blowup" in raw:
        if not isinstance(raw["expect_blowup"], bool):
            raise ConfigError("expect_blowup: expected true or false")
        cfg.expect_blowup = raw["expect_blowup"]

    fit = _table(raw, "fit")
    _check_keys(fit, _FIT, "fit", strict)
    if "model" in fit:
        if fit["model"] not in ("power", "exponential"):
            raise ConfigError(f"fit.model: expected 'power' or 'exponential', got {fit['model']!r}")
        cfg.fit_model = fit["model"]
        key = "p" if cfg.fit_model == "power" else "s"
        cfg.fit_order = _num(fit, key, "fit", None)
        if cfg.fit_model == "exponential" and cfg.fit_order is None:
            raise ConfigError("fit.s: required for the exponential model")
        if cfg.fit_order is not None and not cfg.fit_order > 1:
            raise ConfigError(f"fit.{key}: must exceed 1, got {cfg.fit_order}")
    if "source" in fit:
        if fit["source"] not in ("auto", "grid", "riccati"):
            raise ConfigError(f"fit.source: expected auto, grid or riccati, got {fit['source']!r}")
        cfg.fit_source = fit["source"]
    if "records" in fit:
        cfg.records_path = str(fit["records"])

    sw = _table(raw, "sweep")
    _check_keys(sw, _SWEEP, "sweep", strict)
    kw: dict[str, Any] = {}
    for k in ("riccati_time", "grid_time_cap", "horizon_factor", "tail"):
        if k in sw:
            kw[k] = _num(sw, k, "sweep", positive=True)
    if "surrogate" in sw:
        kw["surrogate"] = sw["surrogate"]
    if "seeds_per_family" in sw:
        kw["seeds_per_family"] = sw["seeds_per_family"]
    try:
        cfg.sweep = SweepOptions(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep: {exc}") from None

    tr = _table(raw, "trace")
    _check_keys(tr, _TRACE, "trace", strict)
    if "family" in tr:
        if tr["family"] not in ("plus", "minus"):
            raise ConfigError(f"trace.family: expected 'plus' or 'minus', got {tr['family']!r}")
        cfg.trace_family = tr["family"]
    if "seeds" in tr:
        seeds = []
        for j, sd in enumerate(tr["seeds"]):
            if isinstance(sd, (int, float)) and not isinstance(sd, bool):
                seeds.append((0.0, float(sd)))
            elif isinstance(sd, list) and len(sd) == 2:
                seeds.append((float(sd[0]), float(sd[1])))
            else:
                raise ConfigError(f"trace.seeds[{j}]: expected x or [t, x], got {sd!r}")
        cfg.trace_seeds = tuple(seeds)
    cfg.trace_tail = _num(tr, "tail", "trace", 0.25, True)
    if "substeps" in tr:
        cfg.trace_substeps = int(tr["substeps"])

    va = _table(raw, "validate")
    _check_keys(va, _VALIDATE, "validate", strict)
    if "claim" in va:
        if va["claim"] not in ("power", "flat"):
            raise ConfigError(f"validate.claim: expected 'power' or 'flat', got {va['claim']!r}")
        cfg.validate_claim = va["claim"]
    cfg.validate_order = _num(va, "order", "validate", None)
    if "levels" in va:
        cfg.validate_levels = int(va["levels"])

    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ExperimentConfig) -> None:
    amps = ([cfg.epsilon] if cfg.epsilon is not None else []) + list(cfg.epsilons)
    for e in amps:
        data = InitialData(cfg.phi, cfg.psi, e)
        try:
            data.check_admissible(cfg.wavespeed)
        except WaveSpeedError as exc:
            raise ConfigError(f"epsilon{'s' if e != cfg.epsilon else ''}: {exc}") from None
    if cfg.epsilon is None:
        return
    data = cfg.data()
    need = required_half_width(data, cfg.wavespeed, cfg.solver)
    if not cfg.L_given:
        cfg.solver = replace(cfg.solver, L=float(max(cfg.solver.L, math.ceil(need))))
    elif cfg.solver.L < need:
        raise ConfigError(f"solver.L = {cfg.solver.L:g} is too small for solver.max_time = "
                          f"{cfg.solver.max_time:g}: need L >= {need:.6g}")


def load_config(path, strict: bool = False) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, strict)
