"""``charwave`` command-line entry point.

Exit status: 0 on success, 1 on configuration or input errors (including a
failed speed validation and a fit with too few records), 2 when a blowup
was expected but not observed.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .characteristics import MultiTracer, SnapshotTap, TraceError, predict_pole
from .config import ConfigError, ExperimentConfig, load_config
from .initialdata import classify_conditions
from .lifespan import (FitError, fit_exponential, fit_power, read_records, sweep,
                       write_records)
from .solver import (SNAPSHOT_HEADER, SolverError, run_until_stop, snapshot_rows)
from .tables import speed_table
from .wavespeed import WaveSpeedError, validate_assumptions

log = logging.getLogger("charwave")

COMMANDS = ("run", "sweep", "fit", "validate-speed", "trace", "classify")
EXIT_OK, EXIT_CONFIG, EXIT_NO_BLOWUP = 0, 1, 2


def fmt(v) -> str:
    """Serialise a value; floats keep 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_kv(path: Path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            s = fmt(v)
            if isinstance(v, str) or v is None:
                s = '"' + s.replace('"', '\\"') + '"'
            fh.write(f"{k} = {s}\n")


class _SnapshotWriter:
    """Streams snapshots to CSV as the solver produces them."""

    def __init__(self, path: Path, ws, table):
        self.fh = open(path, "w", newline="")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(SNAPSHOT_HEADER)
        self.ws, self.table = ws, table

    def append(self, snap):
        for row in snapshot_rows(snap, self.ws, self.table):
            self.w.writerow([fmt(v) for v in row])

    def close(self):
        self.fh.close()


def _out_dir(cfg: ExperimentConfig, flag: str | None) -> Path:
    out = flag or os.environ.get("CHARWAVE_OUT") or cfg.out
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _cadence_marks(cadence: float, horizon: float) -> tuple[float, ...]:
    # accumulated exactly as the solver accumulates its next snapshot time
    marks, t = [], 0.0
    while cadence > 0 and t + cadence < horizon:
        t = t + cadence
        marks.append(t)
    return tuple(marks)


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    data = cfg.data()
    table = speed_table(cfg.wavespeed, cfg.solver.speed_spline_resolution)
    cadence = cfg.solver.cadence
    sink = _SnapshotWriter(out / "snapshots.csv", cfg.wavespeed, table) if cadence > 0 else None
    try:
        _, info, series = run_until_stop(data, cfg.wavespeed, cfg.solver, snapshots=sink,
                                         land_on=_cadence_marks(cadence, cfg.solver.max_time))
    finally:
        if sink is not None:
            sink.close()
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "max_F1", "max_F2", "ux_inf", "r_inf", "s_inf", "ut_inf"))
        for p in series:
            w.writerow([fmt(v) for v in p])
    write_kv(out / "stop.kv", {"reason": info.reason, "t_stop": info.t_stop,
                               "x_at_max_slope": info.x_at_max_slope, "max_abs_F": info.max_abs_F,
                               "initial_max_F": info.initial_max_F, "threshold": info.threshold,
                               "steps": info.steps})
    print(f"stop: {info.reason} at t = {fmt(info.t_stop)} (max|F| = {info.max_abs_F:.6g}, "
          f"{info.steps} steps)")
    if cfg.expect_blowup and info.reason != "blowup":
        print("error: blowup was expected but the run ended with " + info.reason, file=sys.stderr)
        return EXIT_NO_BLOWUP
    return EXIT_OK


def _fit(cfg: ExperimentConfig, records):
    if cfg.fit_model == "exponential":
        return fit_exponential(records, cfg.fit_order, cfg.fit_source)
    return fit_power(records, cfg.fit_source)


def _write_fit(res, out: Path) -> None:
    (out / "fit.txt").write_text(res.report())
    (out / "fit.kv").write_text(res.to_kv())
    print(res.report(), end="")


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int | None) -> int:
    if not cfg.epsilons:
        raise ConfigError("epsilons: required for sweep")
    opts = cfg.sweep
    opts.workers = workers or cfg.workers
    records = sweep(cfg.template(), cfg.wavespeed, cfg.solver, cfg.epsilons, opts)
    write_records(out / "records.csv", records)
    for r in records:
        print(f"eps = {r.epsilon:.6g}: {r.stop_reason}, t_grid = {fmt(r.t_star_grid) or '-'}, "
              f"t_riccati = {fmt(r.t_star_riccati) or '-'}")
    status = EXIT_OK
    if cfg.fit_model is not None:
        try:
            _write_fit(_fit(cfg, records), out)
        except FitError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_CONFIG
    if cfg.expect_blowup and any(r.t_star_grid is None and r.t_star_riccati is None for r in records):
        print("error: blowup expected for every amplitude but some entries have no lifespan",
              file=sys.stderr)
        return EXIT_NO_BLOWUP
    return status


def cmd_fit(cfg: ExperimentConfig, out: Path) -> int:
    path = Path(cfg.records_path) if cfg.records_path else out / "records.csv"
    if not path.exists():
        raise ConfigError(f"fit.records: records file {path} does not exist")
    res = _fit(cfg, read_records(path))
    _write_fit(res, out)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, out: Path) -> int:
    ws = cfg.wavespeed
    claim, order = cfg.validate_claim, cfg.validate_order
    if claim is None:
        claim = "flat" if ws.kind == "gevrey_flat" else "power"
    if order is None:
        order = cfg.fit_order
    if order is None:
        key = "s" if claim == "flat" else "p"
        try:
            order = ws[key]
        except KeyError:
            raise ConfigError(f"validate.order: required for a {ws.kind} speed") from None
    rep = validate_assumptions(ws, claim, order, levels=cfg.validate_levels)
    write_kv(out / "validation.kv", {"claim": rep.claim, "order": rep.order, "passed": rep.passed,
                                     "witness_min": rep.witness_min, "witness_max": rep.witness_max,
                                     "lower": rep.lower, "upper": rep.upper})
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_CONFIG


def cmd_trace(cfg: ExperimentConfig, out: Path) -> int:
    data = cfg.data()
    ws = cfg.wavespeed
    if cfg.solver.cadence <= 0:
        raise ConfigError("solver.snapshot_cadence: tracing needs snapshots (cadence > 0)")
    seeds = list(cfg.trace_seeds)
    fams = [cfg.trace_family] if cfg.trace_family else None
    if not seeds:
        rep = classify_conditions(data, ws)
        plan = [("minus", rep.blowup_i), ("plus", rep.blowup_ii)]
        plan = [(f, (0.0, x)) for f, x in plan if x is not None and (fams is None or f in fams)]
        if not plan:
            raise ConfigError("trace.seeds: no seeds given and no condition witness found")
    else:
        plan = [(f, sd) for sd in seeds for f in (fams or ["minus"])]
    table = speed_table(ws, cfg.solver.speed_spline_resolution)
    tracers = []
    for fam, sd in plan:
        t0, x0 = sd
        tracers.append(MultiTracer(ws, fam, [x0], t0, table=table, substeps=cfg.trace_substeps))
    _, info, _ = run_until_stop(data, ws, cfg.solver, snapshots=SnapshotTap(*tracers))
    summary = []
    for k, tr in enumerate(tracers):
        trace = tr.traces()[0]
        trace.write_csv(out / f"trace_{k:02d}_{trace.family}.csv")
        pred = predict_pole(trace, cfg.trace_tail)
        summary.append((k, trace.family, trace.seed[0], trace.seed[1], trace.status, len(trace.samples),
                        pred.t_pole, pred.gamma_eff, pred.confidence))
        pole = "none" if pred.t_pole is None else f"{pred.t_pole:.6g}"
        print(f"trace {k} ({trace.family}, x0 = {trace.seed[1]:.6g}): {trace.status}, "
              f"{len(trace.samples)} samples, predicted pole {pole}")
    with open(out / "traces.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "family", "t0", "x0", "status", "samples", "t_pole", "gamma_eff",
                    "confidence"))
        for row in summary:
            w.writerow([fmt(v) for v in row])
    print(f"grid run: {info.reason} at t = {fmt(info.t_stop)}")
    return EXIT_OK


def cmd_classify(cfg: ExperimentConfig, out: Path) -> int:
    rep = classify_conditions(cfg.data() if cfg.epsilon is not None else cfg.template(), cfg.wavespeed)
    items = {"blowup_i": rep.blowup_i, "margin_i": rep.margin_i, "blowup_ii": rep.blowup_ii,
             "margin_ii": rep.margin_ii, "global_sign": rep.global_sign,
             "global_margin": rep.global_margin, "decaying": rep.decaying,
             "usable_for_blowup": rep.usable_for_blowup}
    write_kv(out / "classify.kv", items)
    for k, v in items.items():
        print(f"{k}: {fmt(v) if v is not None else 'none'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="charwave",
                                 description="Riemann-invariant solver and lifespan experiments "
                                             "for u_tt = c(u_x)^2 u_xx.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--out", help="output directory (overrides CHARWAVE_OUT and the config)")
    ap.add_argument("--workers", type=int, help="sweep worker processes")
    ap.add_argument("--strict", action="store_true", help="reject unknown config keys")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, strict=args.strict)
        out = _out_dir(cfg, args.out)
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.workers)
        if args.command == "fit":
            return cmd_fit(cfg, out)
        if args.command == "validate-speed":
            return cmd_validate(cfg, out)
        if args.command == "trace":
            return cmd_trace(cfg, out)
        return cmd_classify(cfg, out)
    except (ConfigError, FitError, SolverError, WaveSpeedError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
