import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from charwave.characteristics import riccati_closed_form
from charwave.initialdata import InitialData, Profile
from charwave.lifespan import (RECORD_HEADER, FitError, LifespanRecord, SweepOptions,
                               fit_exponential, fit_power, read_records, run_diagnostics,
                               seed_points, sweep, write_records)
from charwave.solver import SeriesPoint, SolverConfig

from conftest import pulse


def recs(eps, T, source="grid"):
    out = []
    for e, t in zip(eps, T):
        g, r = (t, None) if source == "grid" else (None, t)
        out.append(LifespanRecord(e, g, r, "blowup" if g else "surrogate", 0.0, 0.01, 0.0))
    return out


EPS = [0.4, 0.283, 0.2, 0.141, 0.1]


def test_fit_power_exact():
    res = fit_power(recs(EPS, [5 * e ** -2 for e in EPS]))
    assert abs(res.slope + 2) <= 1e-9 and res.r_squared == pytest.approx(1.0, abs=1e-12)
    assert res.intercept == pytest.approx(math.log(5), abs=1e-9)
    res = fit_power(recs(EPS, [3 / e for e in EPS]))
    assert abs(res.slope + 1) <= 1e-9


def test_fit_exponential_exact():
    eps = [0.5, 0.45, 0.4, 0.35, 0.3]
    res = fit_exponential(recs(eps, [2 * math.exp(3 / e) for e in eps]), 2.0)
    assert abs(res.slope - 3) <= 1e-9
    assert res.intercept == pytest.approx(math.log(2), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(0.1, 2.0), st.sampled_from([2.0, 3.0, 4.0]))
def test_riccati_mechanism_exponent(a, b, p):
    poles = [riccati_closed_form(a * e, b * e ** (p - 2), 0.0)[1] for e in EPS]
    res = fit_power(recs(EPS, poles, "riccati"), "riccati")
    assert abs(res.slope + (p - 1)) <= 1e-6


def test_power_law_data_discriminates_models():
    eps = np.linspace(0.2, 0.5, 5)
    r = recs(eps, 2 * eps ** -2.0)
    assert fit_exponential(r, 2.0).r_squared < fit_power(r).r_squared - 0.01


def test_too_few_records():
    with pytest.raises(FitError, match="fewer than 4 usable records"):
        fit_power(recs(EPS[:3], [1, 2, 3]))
    r = recs(EPS, [1, 2, 3, 4, 5])
    r[0].t_star_grid = None
    r[1].t_star_grid = math.inf
    with pytest.raises(FitError, match="fewer than 4"):
        fit_power(r)
    with pytest.raises(FitError):
        fit_exponential(recs(EPS, [1, 2, 3, 4, 5]), 1.0)


def test_source_selection():
    r = [LifespanRecord(e, 10 / e, 9 / e ** 2, "blowup", 0.0, 0.01, 0.0) for e in EPS]
    assert fit_power(r, "grid").slope == pytest.approx(-1)
    assert fit_power(r, "riccati").slope == pytest.approx(-2)
    assert fit_power(r, "auto").slope == pytest.approx(-1)
    with pytest.raises(ValueError):
        r[0].t_star("nope")


def test_records_round_trip(tmp_path):
    r = [LifespanRecord(0.1 * k, 1 / 3 * k, None if k % 2 else math.pi, "blowup", -0.7, 2 ** -8, 0.123)
         for k in range(1, 6)]
    path = tmp_path / "records.csv"
    write_records(path, r)
    assert path.read_text().splitlines()[0] == ",".join(RECORD_HEADER)
    back = read_records(path)
    assert back == r
    assert fit_power(back, "grid").slope == fit_power(r, "grid").slope


def test_records_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("epsilon,t_star_grid\n0.1,2\n")
    with pytest.raises(FitError, match="lacks columns"):
        read_records(path)


def test_sweep_options_validation():
    for kw in ({"surrogate": "maybe"}, {"riccati_time": 0}, {"horizon_factor": 0.5},
               {"seeds_per_family": 0}):
        with pytest.raises(ValueError):
            SweepOptions(**kw)


def test_seed_points(p2):
    x = seed_points(pulse(0.2), p2, "minus", 16)
    assert x.size == 16 and x.min() < -1 / math.sqrt(2) < x.max()
    # psi_x > 0 only for x < 0
    assert x.max() <= 0.0
    zero = InitialData(Profile("zero"), Profile("zero"), 0.1)
    assert seed_points(zero, p2, "minus", 8).size == 0


def test_run_diagnostics():
    s = [SeriesPoint(0.0, 1.0, 0.5, 0.1, 0.2, 0.2, 0.2),
         SeriesPoint(1.0, 3.0, 0.5, 0.12, 0.2, 0.199, 0.2),
         SeriesPoint(2.0, 2000.0, 0.5, 0.11, 0.2, 0.2, 0.2)]
    d = run_diagnostics(s, 1.0)
    assert d["F_ratio"] == 2000.0
    assert d["ux_ratio"] == pytest.approx(1.0)
    assert d["r_drift"] == 0.0 and d["s_drift"] == pytest.approx(0.005)


def test_sweep_constant_speed(const):
    cfg = SolverConfig(dx=2.0 ** -5, max_time=5.0)
    out = sweep(pulse(0.1), const, cfg, [0.1, 0.2, 0.05], SweepOptions(workers=1))
    assert [r.epsilon for r in out] == [0.2, 0.1, 0.05]
    for r in out:
        assert r.stop_reason == "horizon"
        assert r.t_star_grid is None and r.t_star_riccati is None


def test_sweep_global_data(p2):
    data = InitialData(Profile("zero"), Profile("tanh", amplitude=-1.0), 0.1)
    cfg = SolverConfig(dx=2.0 ** -5, cfl=0.95, max_time=20.0)
    out = sweep(data, p2, cfg, [0.1, 0.2], SweepOptions(workers=1, surrogate="never"))
    for r in out:
        assert r.stop_reason == "horizon" and r.t_star_grid is None


def test_sweep_errors_are_recorded(p2, monkeypatch):
    import charwave.lifespan as lf

    def boom(*a, **k):
        raise ArithmeticError("synthetic failure")
    monkeypatch.setattr(lf, "_entry", boom)
    out = sweep(pulse(0.1), p2, SolverConfig(dx=2.0 ** -5), [0.1], SweepOptions(workers=1))
    assert out[0].stop_reason.startswith("error: synthetic failure")


def test_sweep_rejects_inadmissible(p2):
    data = InitialData(Profile("gaussian", 0.0, 0.1, 1.0), Profile("zero"), 0.1)
    with pytest.raises(ValueError):
        sweep(data, p2, SolverConfig(), [0.5])


@pytest.mark.slow
def test_refinement_stability_p2(p2):
    cfg = SolverConfig(cfl=0.95, max_time=40.0)
    opts = SweepOptions(workers=1, surrogate="never")
    eps = [0.4, 0.283, 0.2]
    a = sweep(pulse(0.1), p2, cfg, eps, opts)
    b = sweep(pulse(0.1), p2, cfg.__class__(**{**cfg.__dict__, "dx": cfg.dx / 2}), eps, opts)
    for ra, rb in zip(a, b):
        assert ra.stop_reason == rb.stop_reason == "blowup"
        assert abs(ra.t_star_grid - rb.t_star_grid) <= 0.03 * rb.t_star_grid
