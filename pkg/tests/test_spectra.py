from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import find_peaks

from optomech_lab import gaussian_core as gc
from optomech_lab import presets as ps
from optomech_lab import spectra as sp
from optomech_lab.errors import StabilityError
from optomech_lab.models import BecParams, build_three_mode


@pytest.fixture(scope="module")
def base():
    return ps.spectra_set()


def random_stable_sets(count, seed=11):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        mech, cav, _ = ps.spectra_set(temperature=rng.uniform(1, 300))
        cav = replace(cav, pump_power=rng.uniform(1e-3, 8e-3))
        bec = BecParams(omega_b=rng.uniform(0.1, 1.5) * mech.omega_m, zeta=rng.uniform(0, 150))
        delta = rng.uniform(0.05, 3.0) * cav.kappa
        model = build_three_mode(mech, cav.with_detuning(delta), bec)
        if gc.is_stable(model.K):
            out.append((mech, cav, bec, delta))
    return out


def test_closed_form_matches_generic_on_random_sets():
    for mech, cav, bec, delta in random_stable_sets(20):
        w = np.linspace(0.01, 3.0, 200) * mech.omega_m
        closed = sp.dns_mechanical(mech, cav, bec, w, delta).values
        generic = sp.dns_mechanical(mech, cav, bec, w, delta, route="generic").values
        assert np.max(np.abs(closed - generic) / generic) <= 1e-6


def test_quantum_noise_routes_agree(base):
    mech, cav, _ = base
    mech = replace(mech, temperature=0.01)
    bec = BecParams(omega_b=0.8 * mech.omega_m, zeta=60.0)
    w = np.linspace(0.05, 2.5, 120) * mech.omega_m
    sp.dns_mechanical(mech, cav, bec, w, 0.5 * cav.kappa, thermal="quantum", cross_check=True)


def test_decoupled_limit_is_thermal_lorentzian(base):
    mech, cav, _ = base
    cav0 = replace(cav, chi=0.0)
    w = np.linspace(0.9, 1.1, 2001) * mech.omega_m
    s = sp.dns_mechanical(mech, cav0, None, w, 0.5 * cav.kappa).values
    lor = 2 * mech.gamma * KB_T(mech) / (mech.mass * ((mech.omega_m**2 - w**2) ** 2
                                                      + (mech.gamma * w) ** 2))
    assert np.allclose(s, lor, rtol=1e-12)
    assert abs(w[np.argmax(s)] - mech.omega_m) <= (w[1] - w[0])


def KB_T(mech):
    from optomech_lab.models import KB
    return KB * mech.temperature


def test_decoupled_effective_temperature_is_bath(base):
    mech, cav, _ = base
    t = sp.effective_temperature(replace(mech, temperature=300.0), replace(cav, chi=0.0))
    assert t == pytest.approx(300.0, rel=0.02)


def test_zero_zeta_limit_matches_two_mode(base):
    mech, cav, _ = base
    w = np.linspace(0.1, 2.0, 200) * mech.omega_m
    two = sp.dns_mechanical(mech, cav, None, w, 0.5 * cav.kappa).values
    zero = sp.dns_mechanical(mech, cav, BecParams(omega_b=mech.omega_m, zeta=0.0), w,
                             0.5 * cav.kappa).values
    assert np.array_equal(zero, two)
    # the resonant condensate must stay dynamically damped, so approach the
    # limit with small but finite zeta; the deviation scales as zeta^2
    errs = []
    for zeta in (1e-2, 5e-4):
        for route in ("closed", "generic"):
            three = sp.dns_mechanical(mech, cav, BecParams(omega_b=mech.omega_m, zeta=zeta), w,
                                      0.5 * cav.kappa, route=route).values
            errs.append(np.max(np.abs(three - two) / two))
    assert errs[2] <= 1e-8 and errs[3] <= 1e-8
    assert errs[0] / errs[2] == pytest.approx(400.0, rel=0.01)


def test_printed_srp_equals_exact_without_condensate(base):
    mech, cav, _ = base
    pt = sp._point(mech, cav, None, 0.5 * cav.kappa)
    w = np.linspace(0.1, 2, 50) * mech.omega_m
    assert np.allclose(sp.radiation_pressure_spectrum(w, pt, "printed"),
                       sp.radiation_pressure_spectrum(w, pt, "exact"), rtol=1e-12)
    pt2 = sp._point(mech, cav, BecParams(omega_b=mech.omega_m, zeta=100.0), 0.5 * cav.kappa)
    a = sp.radiation_pressure_spectrum(w, pt2, "printed")
    b = sp.radiation_pressure_spectrum(w, pt2, "exact")
    assert np.max(np.abs(a - b) / b) > 1e-2


def test_closed_form_pieces_consistent(base):
    mech, cav, _ = base
    bec = BecParams(omega_b=0.9 * mech.omega_m, zeta=80.0)
    pt = sp._point(mech, cav, bec, 0.7 * cav.kappa)
    w = np.linspace(0.2, 2.0, 40) * mech.omega_m
    assert np.allclose(sp.susceptibility(w, pt), sp.phi_function(w, pt) / sp.d_mechanical(w, pt),
                       rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.5), st.floats(0.0, 120.0), st.floats(0.2, 1.4))
def test_spectrum_nonnegative_and_even(dk, zeta, wb):
    mech, cav, _ = ps.spectra_set()
    bec = BecParams(omega_b=wb * mech.omega_m, zeta=zeta)
    if not gc.is_stable(build_three_mode(mech, cav.with_detuning(dk * cav.kappa), bec).K):
        return
    w = np.linspace(0.05, 3, 60) * mech.omega_m
    s = sp.spectrum_generic(mech, cav, bec, w, dk * cav.kappa)
    s_neg = sp.spectrum_generic(mech, cav, bec, -w, dk * cav.kappa)
    assert np.all(s >= 0)
    assert np.allclose(s, s_neg, rtol=1e-9)


def test_optical_spring_trend(base):
    mech, cav, _ = base
    # at fixed pump power the spring scales as D / (D^2 + kappa^2)^2, so the
    # softening and broadening grow up to about kappa/2 and then relax
    w = np.linspace(0.3, 1.3, 16001) * mech.omega_m
    peaks = []
    widths = []
    for d in [0.02, 0.1, 0.2, 0.3, 0.5]:
        s = sp.dns_mechanical(mech, cav, None, w, d * cav.kappa).values
        peaks.append(w[np.argmax(s)])
        widths.append(np.sum(s > s.max() / 2))
    assert np.all(np.diff(peaks) < 0)
    assert np.all(np.diff(widths) > 0)
    assert peaks[0] < mech.omega_m


def test_cooling_optimum_near_half_kappa(base):
    mech, cav, _ = base
    grid = np.linspace(0.1, 1.5, 29)
    temps = [sp.effective_temperature(mech, cav, None, d * cav.kappa) for d in grid]
    best = grid[int(np.argmin(temps))]
    assert 0.3 <= best <= 0.7
    assert min(temps) < 0.01 * mech.temperature


def test_secondary_peak_at_condensate_frequency(base):
    mech, cav, _ = base
    zeta = ps.spectra_reference_zeta(mech, cav)
    wb = mech.omega_m
    bec = BecParams(omega_b=wb, zeta=zeta)
    w = np.linspace(0.5, 1.5, 20001) * mech.omega_m
    for d in [0.25, 0.5, 1.0, 2.0]:
        s = sp.dns_mechanical(mech, cav, bec, w, d * cav.kappa).values
        idx, _ = find_peaks(np.log(s))
        assert len(idx) >= 2
        assert np.min(np.abs(w[idx] - wb)) < 0.02 * wb


def test_effective_temperature_matches_lyapunov(base):
    mech, cav, _ = base
    for bec in [None, BecParams(omega_b=mech.omega_m, zeta=20.0)]:
        est = sp.effective_temperature(mech, cav, bec, 0.5 * cav.kappa, details=True)
        ref = sp.effective_temperature_lyapunov(mech, cav, bec, 0.5 * cav.kappa)
        assert est.kelvin == pytest.approx(ref, rel=1e-6)
        assert est.relative_error < 0.01


def test_cooling_switch(base):
    mech, cav, _ = base
    d = 0.5 * cav.kappa
    t0 = sp.effective_temperature(mech, cav, None, d)
    low = sp.effective_temperature(mech, cav, BecParams(omega_b=0.1 * mech.omega_m, zeta=20.0), d)
    res = sp.effective_temperature(mech, cav, BecParams(omega_b=mech.omega_m, zeta=20.0), d)
    assert abs(low - t0) / t0 < 0.10
    assert res >= 5 * t0


def test_strong_resonant_condensate_inhibits_cooling(base):
    mech, cav, _ = base
    # zeta = 120 /s is close to the largest value keeping the system stable
    t = sp.effective_temperature(mech, cav, BecParams(omega_b=mech.omega_m, zeta=120.0),
                                 0.5 * cav.kappa)
    assert mech.temperature / 2 <= t <= 2 * mech.temperature


def test_unstable_raises(base):
    mech, cav, _ = base
    with pytest.raises(StabilityError):
        sp.dns_mechanical(mech, cav, None, [mech.omega_m], -0.5 * cav.kappa)


def test_atomic_spectrum_zero_when_decoupled(base):
    mech, cav, _ = base
    w = np.linspace(0.1, 2, 50) * mech.omega_m
    s = sp.dns_atomic(mech, cav, BecParams(omega_b=mech.omega_m, zeta=0.0), w, 0.5 * cav.kappa)
    assert np.all(s.values == 0)


def test_atomic_spectrum_single_peak_redshifts(base):
    mech, cav, _ = base
    cav0 = replace(cav, chi=0.0)
    w = np.linspace(0.5, 1.2, 14001) * mech.omega_m
    centres = []
    for zeta in [40.0, 80.0, 120.0]:
        s = sp.dns_atomic(mech, cav0, BecParams(omega_b=mech.omega_m, zeta=zeta), w,
                          0.5 * cav.kappa).values
        idx, _ = find_peaks(s, prominence=1e-3 * s.max())
        assert len(idx) == 1
        centres.append(w[idx[0]])
    assert centres[0] > centres[1] > centres[2]


def test_atomic_splitting_grows_with_chi(base):
    mech, cav, _ = base
    bec = BecParams(omega_b=mech.omega_m, zeta=60.0)
    w = np.linspace(0.5, 1.3, 16001) * mech.omega_m
    half = cav.omega_cavity / (2 * cav.length)
    splits = []
    for k in [1, 2]:
        c = replace(cav, chi=k * half)
        s = sp.dns_atomic(mech, c, bec, w, 0.5 * cav.kappa).values
        idx, _ = find_peaks(np.log(s))
        assert len(idx) == 2
        splits.append(abs(w[idx[1]] - w[idx[0]]))
    assert splits[1] > 2 * splits[0]


def test_effective_oscillator_zero_detuning(base):
    mech, cav, _ = base
    osc = sp.effective_oscillator(mech, cav, None, 0.5 * mech.omega_m, 0.0)
    assert osc.omega_eff == pytest.approx(mech.omega_m, rel=1e-14)
    assert osc.gamma_eff == pytest.approx(mech.gamma, rel=1e-14)


def test_quasi_static_damping_finite(base):
    mech, cav, _ = base
    a = sp.effective_oscillator(mech, cav, None, 0.0, 0.5 * cav.kappa)
    b = sp.effective_oscillator(mech, cav, None, 1e-4 * mech.omega_m, 0.5 * cav.kappa)
    assert a.probe_frequency == sp.QUASI_STATIC_RATIO * mech.omega_m
    assert a.gamma_eff == pytest.approx(b.gamma_eff, rel=1e-6)


def test_printed_mu_lacks_probe_factor(base):
    mech, cav, _ = base
    pt = sp._point(mech, cav, BecParams(omega_b=mech.omega_m, zeta=100.0), 0.5 * cav.kappa)
    w = 0.7 * mech.omega_m
    _, exact = sp.mu_terms(w, pt, "exact")
    _, printed = sp.mu_terms(w, pt, "printed")
    assert printed == pytest.approx(exact / w, rel=1e-12)


def test_monotone_empty_cavity_spring(base):
    mech, cav, _ = base
    grid = np.linspace(0.05, 5.0, 40) * cav.kappa
    w_eff = [sp.effective_oscillator(mech, cav, None, 0.0, d).omega_eff for d in grid]
    i = int(np.argmin(w_eff))
    assert np.all(np.diff(w_eff[: i + 1]) < 0) and np.all(np.diff(w_eff[i:]) > 0)


def test_condensate_enhances_damping(base):
    mech, cav, _ = base
    d = 0.5 * cav.kappa
    bare = sp.effective_oscillator(mech, cav, None, 0.9 * mech.omega_m, d)
    hyb = sp.effective_oscillator(mech, cav, BecParams(omega_b=1.0001 * mech.omega_m, zeta=100.0),
                                  0.9 * mech.omega_m, d)
    assert hyb.gamma_eff > bare.gamma_eff


def test_curve_csv(tmp_path, base):
    mech, cav, _ = base
    c = sp.dns_mechanical(mech, cav, None, [mech.omega_m, 1.1 * mech.omega_m], 0.5 * cav.kappa)
    path = tmp_path / "s.csv"
    c.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# quantity = S_q")
    row = lines[-1].split(",")
    assert float(row[1]) == c.values[-1]
