import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisefield import (
    AmplitudeDampingParams,
    AmplitudeDampingTrajectory,
    InitialPureState,
    OhmicParams,
    OhmicTrajectory,
    amplitudes,
    analytic_state,
    dump_tabulated,
    field,
    load_tabulated,
    phase_characteristic,
    sigma_squared,
    unwrap_arg,
)
from noisefield.channels import TabulatedTrajectory
from noisefield.ensemble import gauss_hermite_rule
from noisefield.errors import DomainError, ResolutionError
from noisefield.synthesis import (
    DEFAULT_SIGMA_SQ_MAX,
    PhaseProcess,
    default_knee,
    field_grid,
    saturate,
)

from conftest import EQUATOR, GENERIC, SCENARIOS, mixed_tabulated

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0 + 0j, -1.0])


def still(omega0=0.0, psi=EQUATOR):
    return OhmicTrajectory(OhmicParams(J0=0.0, Lambda=1.0, kBT=1.0, omega0=omega0), psi)


def test_sigma_squared_examples():
    assert sigma_squared(still(), 0.4) == 0.0
    traj, _ = SCENARIOS["ohmic"]
    tr = traj()
    for t in (0.1, 0.7, 1.9):
        assert sigma_squared(tr, t) == pytest.approx(2 * tr.gamma(np.array([t]))[0], rel=1e-14)
    half = AmplitudeDampingParams(gamma_t=(0.0, 1.0), gamma_values=(0.0, 1.0))
    ad = AmplitudeDampingTrajectory(half, EQUATOR)
    assert sigma_squared(ad, 0.5) == pytest.approx(math.log(1.5), rel=1e-14)


def test_sigma_squared_rejects_invalid_trajectory():
    t = np.linspace(0, 1, 5)
    bad = TabulatedTrajectory(t, np.full(5, 0.5), np.full(5, 0.6 + 0j))
    with pytest.raises(DomainError):
        sigma_squared(bad, 0.5)


def test_saturation_shape():
    m = DEFAULT_SIGMA_SQ_MAX
    knee = default_knee(m)
    x = np.array([0.0, 1.0, 2.0, knee])
    s, d = saturate(x, np.ones_like(x))
    assert np.array_equal(s, x) and np.array_equal(d, np.ones_like(x))
    s, _ = saturate(np.array([np.inf]), np.array([np.inf]))
    assert s[0] == m
    # smooth through the knee: one-sided slopes agree
    h = 1e-6
    lo, _ = saturate(np.array([knee - h]), np.zeros(1))
    hi, _ = saturate(np.array([knee + h]), np.zeros(1))
    assert (hi[0] - knee) / h == pytest.approx((knee - lo[0]) / h, rel=1e-6)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_saturation_monotone_and_bounded(x1, x2):
    lo, hi = sorted((x1, x2))
    (s_lo, s_hi), _ = saturate(np.array([lo, hi]), np.zeros(2))
    assert 0 <= s_lo <= s_hi <= DEFAULT_SIGMA_SQ_MAX
    assert s_lo <= lo


def test_unwrap_closed_form_is_unbounded():
    tr = still(omega0=40.0, psi=GENERIC)
    grid = np.linspace(0, 2, 400)
    th = unwrap_arg(tr, grid)
    assert np.allclose(th, np.angle(GENERIC.beta / GENERIC.alpha) + 40.0 * grid, atol=1e-12)


def test_unwrap_from_samples_matches_closed_form(tmp_path):
    tr = OhmicTrajectory(OhmicParams(J0=0.1, Lambda=5.0, kBT=1.0, omega0=30.0), GENERIC)
    grid = np.linspace(0, 2, 301)
    dump_tabulated(tr, grid, tmp_path / "t.csv")
    tab = load_tabulated(tmp_path / "t.csv")
    assert np.allclose(unwrap_arg(tab, grid), unwrap_arg(tr, grid), atol=1e-9)


def test_unwrap_constant_and_zero():
    t = np.linspace(0, 1, 9)
    const = TabulatedTrajectory(t, np.full(9, 0.5), np.full(9, 0.3j))
    assert np.allclose(unwrap_arg(const, t), math.pi / 2, atol=1e-15)
    dead = TabulatedTrajectory(t, np.full(9, 0.5), np.zeros(9, dtype=complex))
    assert np.array_equal(unwrap_arg(dead, t), np.zeros(9))


def test_unwrap_too_coarse():
    t = np.linspace(0, 1, 8)
    flip = np.where(t < 0.5, 0.4, -0.4) * np.exp(0.01j * t)
    tab = TabulatedTrajectory(t, np.full(8, 0.5), flip)
    with pytest.raises(ResolutionError):
        unwrap_arg(tab, t)


def test_amplitudes_at_start_reproduce_initial_state():
    traj, _ = SCENARIOS["ohmic"]
    for z in (-3.0, 0.0, 1.7):
        amp = amplitudes(traj(), 0.0, z)
        assert amp.a == pytest.approx(abs(GENERIC.alpha), abs=1e-15)
        assert amp.b == pytest.approx(abs(GENERIC.beta) * np.exp(1j * np.angle(np.conj(GENERIC.alpha) * GENERIC.beta)),
                                      abs=1e-15)


def test_damping_amplitude_moduli():
    tr = SCENARIOS["amplitude-damping"][0]()
    for t in (0.2, 1.0, 2.5):
        g = 1 - math.exp(-t)
        amp = amplitudes(tr, t, 0.8)
        assert abs(amp.a) == pytest.approx(math.sqrt(1 - (1 - g) * (1 - abs(GENERIC.alpha) ** 2)), rel=1e-14)
        assert abs(amp.b) == pytest.approx(abs(GENERIC.beta) * math.sqrt(1 - g), rel=1e-14)


@pytest.mark.parametrize("name", sorted(SCENARIOS))
@given(t=st.floats(0, 1), z=st.floats(-8, 8))
@settings(max_examples=60, deadline=None)
def test_normalization_and_population_determinism(name, t, z):
    factory, grid = SCENARIOS[name]
    tr = factory()
    tt = grid[0] + t * (grid[-1] - grid[0])
    psi = analytic_state(tr, tt, z)
    r00, _, _ = tr.components(np.array([tt]))
    assert abs(psi.norm - 1) <= 1e-12
    assert abs(abs(psi.a) ** 2 - r00[0]) <= 1e-12
    assert abs(psi.a - analytic_state(tr, tt, 0.0).a) == 0.0


def test_large_decoherence_changes_only_relative_phase():
    tr = SCENARIOS["recurrence"][0]()
    s1, s2 = analytic_state(tr, 0.5, -1.0), analytic_state(tr, 0.5, 2.0)
    assert s1.a == s2.a and abs(s1.b) == pytest.approx(abs(s2.b), rel=1e-15)
    assert abs(s1.b - s2.b) > 0.1


def test_mixed_start_states_depend_on_z():
    tr = mixed_tabulated()
    proc = PhaseProcess(tr)
    assert proc.initial_sigma > 0 and not proc.pure_start
    assert analytic_state(tr, 0.0, -1.0).b != analytic_state(tr, 0.0, 1.0).b


def test_zero_field_for_stationary_equator():
    f = field(still(), 0.3, 1.2)
    assert (f.Bx, f.By, f.Bz) == (0.0, 0.0, 0.0)


def test_pure_precession_field():
    w0 = 3.0
    tr = still(omega0=w0, psi=GENERIC)
    for t in (0.0, 0.4, 1.3):
        f = field(tr, t, 0.5)
        psi = analytic_state(tr, t, 0.5)
        bplus = -w0 * psi.b * np.conj(psi.a)
        assert f.Bz == pytest.approx(w0 * abs(psi.b) ** 2, rel=1e-14)
        assert complex(f.Bx, f.By) == pytest.approx(bplus, rel=1e-14)


def _fd4(f, t, h):
    return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)


@pytest.mark.parametrize("name, h", [("recurrence", 4e-4), ("ohmic", 1e-2), ("amplitude-damping", 2e-2)])
def test_amplitude_derivatives_are_fourth_order_consistent(name, h):
    factory, grid = SCENARIOS[name]
    tr = factory()
    times = grid[0] + (grid[-1] - grid[0]) * np.array([0.23, 0.51, 0.78])
    errs = []
    for step in (h, h / 2):
        worst = 0.0
        for t in times:
            for z in (-1.3, 0.4):
                amp = amplitudes(tr, t, z)
                da = _fd4(lambda s: analytic_state(tr, s, z).a, t, step)
                db = _fd4(lambda s: analytic_state(tr, s, z).b, t, step)
                worst = max(worst, abs(da - amp.da_dt), abs(db - amp.db_dt))
        errs.append(worst)
    assert math.log2(errs[0] / errs[1]) >= 3.5


def hamiltonian(f):
    return f.Bx * SX + f.By * SY + f.Bz * SZ


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_analytic_state_solves_the_schrodinger_equation(name):
    factory, grid = SCENARIOS[name]
    tr = factory()
    h = 1e-5
    for frac in (0.17, 0.5, 0.83):
        t = grid[0] + frac * (grid[-1] - grid[0])
        for z in (-2.0, 0.3, 1.5):
            psi = analytic_state(tr, t, z).vector()
            d = (analytic_state(tr, t + h, z).vector() - analytic_state(tr, t - h, z).vector()) / (2 * h)
            f = field(tr, t, z)
            resid = 1j * d - hamiltonian(f) @ psi
            assert np.linalg.norm(resid) <= 1e-6 * max(1.0, f.magnitude)


def test_field_is_real_on_all_channels(scenario):
    traj, grid = scenario
    proc = PhaseProcess(traj)
    mids = 0.5 * (grid[1:] + grid[:-1])
    z, _ = gauss_hermite_rule(64)
    bx, by, bz, res = field_grid(proc, mids, z)
    assert np.all(np.isfinite(bx) & np.isfinite(by) & np.isfinite(bz))
    assert np.abs(res).max() <= 1e-9


def test_tabulated_field_tracks_closed_form(tmp_path):
    tr = SCENARIOS["amplitude-damping"][0]()
    grid = np.linspace(0.0, 3.0, 601)
    dump_tabulated(tr, grid, tmp_path / "t.csv")
    tab = load_tabulated(tmp_path / "t.csv")
    for t in (0.5, 1.5, 2.5):
        a, b = field(tr, t, 0.7), field(tab, t, 0.7)
        assert np.allclose([a.Bx, a.By, a.Bz], [b.Bx, b.By, b.Bz], atol=1e-4)


@pytest.mark.parametrize("s2, ref", [(0.0, 1.0), (2.0, math.exp(-1)), (240.0, 7.667648073722e-53)])
def test_phase_characteristic(s2, ref):
    assert phase_characteristic(s2) == pytest.approx(ref, rel=1e-12)


def test_phase_characteristic_domain():
    with pytest.raises(DomainError):
        phase_characteristic(-1.0)


@pytest.mark.parametrize("s2", [0.0, 0.5, 2.0, 10.0, 40.0])
def test_quadrature_mean_of_phase_factor(s2):
    z, w = gauss_hermite_rule(64)
    assert abs(w @ np.exp(1j * math.sqrt(s2) * z) - phase_characteristic(s2)) <= 1e-10
