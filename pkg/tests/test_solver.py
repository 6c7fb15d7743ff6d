import math

import numpy as np
import pytest

from charwave.initialdata import InitialData, Profile, eval_profile, riemann_initial
from charwave.solver import (RiemannField, SolverConfig, SolverError, extract_u, init_field,
                             reference_step_psystem, run_reference, run_until_stop, step)
from charwave.tables import speed_table
from charwave.wavespeed import DomainError, invert_G, make_wavespeed

from conftest import pulse
from oracles import dalembert


def test_defaults():
    cfg = SolverConfig()
    assert (cfg.cfl, cfg.dx, cfg.slope_blow_threshold) == (0.8, 2.0 ** -8, None)


@pytest.mark.parametrize("kw", [{"cfl": 1.0}, {"cfl": 0.0}, {"dx": -1.0}, {"L": 0.0},
                                {"max_time": 0.0}, {"slope_blow_threshold": -1.0}])
def test_bad_config(kw):
    with pytest.raises(SolverError):
        SolverConfig(**kw)


def test_zero_data_gives_zero_field(p3):
    fld = init_field(pulse(0.0), p3, SolverConfig(L=20.0, max_time=1.0))
    for a in (fld.r, fld.s, fld.rx, fld.sx):
        assert np.all(a == 0.0)


def test_init_constant_speed(const):
    data = pulse(0.1)
    fld = init_field(data, const, SolverConfig(L=20.0, max_time=1.0))
    psi_x = eval_profile(data.psi, fld.x)[1]
    expect = np.where(np.abs(0.1 * psi_x) < 1e-200, 0.0, 0.1 * psi_x)
    np.testing.assert_allclose(fld.rx, expect, rtol=1e-15, atol=0)
    np.testing.assert_allclose(fld.sx, expect, rtol=1e-15, atol=0)


def test_init_round_trip(p3):
    data = InitialData(Profile("gaussian", 0.0, 1.0, 1.0), Profile("gaussian", 0.5, 1.0, 1.0), 0.1)
    cfg = SolverConfig(L=20.0, max_time=1.0)
    fld = init_field(data, p3, cfg)
    ut, ux = extract_u(fld, p3)
    x = fld.x
    np.testing.assert_allclose(ux, 0.1 * eval_profile(data.phi, x)[1], atol=1e-10)
    np.testing.assert_allclose(ut, 0.1 * eval_profile(data.psi, x)[0], atol=1e-10)
    sample = x[:: len(x) // 50]
    idx = np.searchsorted(x, sample)
    for i in idx:
        assert abs(invert_G(p3, 0.5 * (fld.r[i] - fld.s[i])) - 0.1 * eval_profile(data.phi, x[i])[1]) <= 1e-10


def test_domain_too_small(p2):
    with pytest.raises(SolverError, match="L = "):
        init_field(pulse(0.1), p2, SolverConfig(L=12.0, max_time=10.0))


def _field(r, s, dx=0.1):
    z = np.zeros_like(r)
    return RiemannField(0.0, 0.0, dx, r, s, z, z.copy())


def test_extract_u_symmetries(p3):
    r = np.linspace(-0.2, 0.3, 11)
    ut, ux = extract_u(_field(r, r.copy()), p3)
    assert np.all(ux == 0.0)
    np.testing.assert_allclose(ut, r)
    ut, ux = extract_u(_field(r, -r), p3)
    assert np.all(ut == 0.0)


def test_extract_u_out_of_range(p3):
    r = np.full(5, 3.0)
    with pytest.raises(DomainError):
        extract_u(_field(r, -r), p3)


def test_constant_speed_advects_sine(const):
    dx = 2.0 ** -6
    x = -40.0 + dx * np.arange(int(80 / dx) + 1)
    win = np.exp(-(x / 12.0) ** 8)
    r0 = np.sin(x) * win
    rx0 = (np.cos(x) - np.sin(x) * 8 * x ** 7 / 12.0 ** 8) * win
    fld = RiemannField(0.0, x[0], dx, r0.copy(), np.zeros_like(x), rx0.copy(), np.zeros_like(x))
    cfg = SolverConfig(dx=dx, L=40.0, max_time=2.0)
    t = 0.0
    while t < 2.0 - 1e-12:
        dt = min(cfg.cfl * dx, 2.0 - t)
        fld = step(fld, const, cfg, dt)
        t += dt
    xs = x + 2.0
    ex = np.sin(xs) * np.exp(-(xs / 12.0) ** 8)
    assert np.max(np.abs(fld.r - ex)) < 1e-5
    # with c' = 0 there are no sources: rx is transported exactly like r
    exx = (np.cos(xs) - np.sin(xs) * 8 * xs ** 7 / 12.0 ** 8) * np.exp(-(xs / 12.0) ** 8)
    assert np.max(np.abs(fld.rx - exx)) < 1e-5


def test_linear_wave_against_dalembert():
    const = make_wavespeed("constant", {}, 10.0)
    data = InitialData(Profile("gaussian"), Profile("gaussian", 0.5), 1.0)
    cfg = SolverConfig(dx=2.0 ** -6, L=20.0, max_time=5.0, snapshot_cadence=0)
    fin, info, _ = run_until_stop(data, const, cfg)
    assert info.reason == "horizon" and fin.t == 5.0
    ut, ux = extract_u(fin, const)
    ut_ex, ux_ex = dalembert(data.phi, data.psi, 1.0, fin.x, 5.0)
    assert max(np.max(np.abs(ut - ut_ex)), np.max(np.abs(ux - ux_ex))) < 1e-4


def test_constant_speed_long_run(const):
    data = InitialData(Profile("gaussian", 0.0, 1.0, 0.5), Profile("sine_packet"), 0.2)
    cfg = SolverConfig(dx=2.0 ** -6, max_time=50.0, L=65.0, snapshot_cadence=0)
    _, info, series = run_until_stop(data, const, cfg)
    assert info.reason == "horizon" and info.t_stop == 50.0
    F = np.array([max(p.max_F1, p.max_F2) for p in series])
    assert np.all(F <= 1.01 * F[0])


def test_self_convergence_p2(p2):
    data = pulse(0.2)
    out = {}
    for dx in (2.0 ** -7, 2.0 ** -9):
        cfg = SolverConfig(dx=dx, L=20.0, max_time=1.0, snapshot_cadence=0)
        out[dx], info, _ = run_until_stop(data, p2, cfg)
        assert info.reason == "horizon"
    coarse, fine = out[2.0 ** -7], out[2.0 ** -9]
    assert np.max(np.abs(coarse.r - fine.r[::4])) < 1e-4


def test_blowup_p2(p2):
    cfg = SolverConfig(dx=2.0 ** -8, cfl=0.95, max_time=30.0, L=52.0, snapshot_cadence=0)
    _, info, series = run_until_stop(pulse(0.2), p2, cfg)
    assert info.reason == "blowup"
    assert info.max_abs_F >= info.threshold == pytest.approx(1e3)
    ux = np.array([p.ux_inf for p in series])
    assert np.max(ux) <= 0.5
    # invariants: max principle, small-data confinement, speed pinching, blowup signature
    r_inf = np.array([p.r_inf for p in series])
    s_inf = np.array([p.s_inf for p in series])
    t = np.array([p.t for p in series])
    for a in (r_inf, s_inf):
        growth = np.maximum.accumulate(a) - a[0]
        assert np.all(growth <= 1e-3 * a[0] * np.maximum(t, 1e-300) + 1e-15)
    assert np.max(ux) <= 4 * (r_inf[0] + s_inf[0])
    c = p2.c(np.array([-np.max(ux), np.max(ux)]))
    assert 0.5 <= c.min() and c.max() <= 1.5
    assert series[-1].ut_inf <= 2 * series[0].ut_inf


def test_landing_times_and_snapshots(p2):
    snaps = []
    cfg = SolverConfig(dx=2.0 ** -6, L=20.0, max_time=2.0, snapshot_cadence=0.5)
    _, info, _ = run_until_stop(pulse(0.1), p2, cfg, snapshots=snaps, land_on=(0.3,))
    times = [s.t for s in snaps]
    assert info.t_stop == 2.0
    assert times[0] == 0.0 and times[-1] == 2.0 and 0.3 in times
    assert all(b > a for a, b in zip(times, times[1:]))


def test_determinism(p2):
    cfg = SolverConfig(dx=2.0 ** -6, L=20.0, max_time=2.0, snapshot_cadence=0)
    a, _, _ = run_until_stop(pulse(0.2), p2, cfg)
    b, _, _ = run_until_stop(pulse(0.2), p2, cfg)
    assert np.array_equal(a.r, b.r) and np.array_equal(a.sx, b.sx)


def test_decreasing_data_is_global(p2):
    data = InitialData(Profile("zero"), Profile("tanh", amplitude=-1.0), 0.1)
    cfg = SolverConfig(dx=2.0 ** -6, cfl=0.95, max_time=100.0, L=160.0, snapshot_cadence=0)
    _, info, _ = run_until_stop(data, p2, cfg)
    assert info.reason == "horizon"


def test_boundary_contact(const):
    # constant far field except a pulse sitting at the left edge
    dx = 0.05
    x = -5.0 + dx * np.arange(201)
    r = np.exp(-((x + 4.8) / 0.3) ** 2) * 0.1
    fld = RiemannField(0.0, x[0], dx, r, np.zeros_like(x), np.gradient(r, dx), np.zeros_like(x))
    data = pulse(0.1)
    cfg = SolverConfig(dx=dx, L=5.0, max_time=50.0)
    _, info, _ = run_until_stop(data, const, cfg, fld=fld)
    assert info.reason == "boundary_contact"


def test_reference_fixed_point(p3):
    v = np.full(64, 0.1)
    w = np.full(64, -0.05)
    v2, w2 = reference_step_psystem(v, w, p3, 0.01, 0.05)
    np.testing.assert_array_equal(v2, v)
    np.testing.assert_array_equal(w2, w)


def test_reference_cfl(p3):
    v = np.zeros(32)
    with pytest.raises(SolverError, match="CFL"):
        reference_step_psystem(v, v, p3, 0.2, 0.1)


def test_reference_linear_convergence():
    const = make_wavespeed("constant", {}, 10.0)
    data = InitialData(Profile("gaussian"), Profile("gaussian", 0.5), 1.0)
    errs = []
    for dx in (2.0 ** -5, 2.0 ** -6):
        x, v, w, t, _ = run_reference(data, const, dx, 12.0, 2.0)
        ut, ux = dalembert(data.phi, data.psi, 1.0, x, t)
        errs.append(np.max(np.abs(v - ux)))
    assert errs[1] < errs[0] and math.log2(errs[0] / errs[1]) > 0.8


def test_reference_matches_main_solver_p3(p3):
    data = pulse(0.3)
    dx = 2.0 ** -8
    cfg = SolverConfig(dx=dx, L=14.0, max_time=1.0, snapshot_cadence=0)
    fin, _, _ = run_until_stop(data, p3, cfg)
    _, ux = extract_u(fin, p3)
    x, v, _, _, _ = run_reference(data, p3, dx / 4, 14.0, 1.0)
    assert np.max(np.abs(v[::4] - ux)) < 1e-3
