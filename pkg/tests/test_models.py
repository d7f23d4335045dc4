import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optomech_lab import gaussian_core as gc
from optomech_lab import models as md
from optomech_lab import presets as ps
from optomech_lab.errors import ArgumentError


def hand_three_mode(G, z, wm, wb, gamma, kappa, delta, alpha):
    """Drift written out directly in (q, p, x, y, Q, P) dimensionless units."""
    gm, ga = 2 * G * alpha, 2 * z * alpha
    K = np.zeros((6, 6))
    K[0, 1] = wm
    K[1, 0], K[1, 1], K[1, 2] = -wm, -gamma, gm
    K[2, 2], K[2, 3] = -kappa, delta
    K[3, 0], K[3, 2], K[3, 3], K[3, 4] = gm, -delta, -kappa, -ga
    K[4, 5] = wb
    K[5, 2], K[5, 4] = -ga, -wb
    return K


def test_three_mode_drift_matches_hand_written():
    mech, cav, bec = ps.hybrid_set()
    model = md.build_three_mode(mech, cav, bec)
    c = model.constants
    ref = hand_three_mode(c["G"], bec.zeta, mech.omega_m, bec.omega_b, mech.gamma,
                          c["kappa"], c["delta"], c["alpha_s"])
    assert np.allclose(model.K, ref, rtol=1e-12, atol=1e-9)


def test_zero_zeta_reduces_to_two_mode():
    mech, cav, _ = ps.hybrid_set()
    bec = md.BecParams(omega_b=mech.omega_m, zeta=0.0)
    K3 = md.build_three_mode(mech, cav, bec).K
    K2 = md.build_two_mode(mech, cav).K
    assert np.allclose(K3[:4, :4], K2)
    assert np.all(K3[:4, 4:] == 0) and np.all(K3[4:, :4] == 0)


def test_hybrid_constants_frozen():
    # G = zeta = 100 /s by construction; alpha_s = eta / sqrt(D^2 + kappa^2)
    mech, cav, bec = ps.hybrid_set()
    c = md.build_three_mode(mech, cav, bec).constants
    assert np.isclose(c["G"], 100.0, rtol=1e-12)
    assert np.isclose(c["kappa"], 4.709128918272133e7, rtol=1e-12)
    assert np.isclose(c["alpha_s"], 8.325740984939976e4, rtol=1e-10)
    assert np.isclose(c["alpha_s"], cav.eta / np.hypot(2 * mech.omega_m, cav.kappa))


def test_pair_constants_frozen():
    mech, cav = ps.optomech_pair()
    c = md.build_two_mode(mech, cav).constants
    assert np.isclose(c["G_eff"], 1.1632027110142241e8, rtol=1e-10)
    assert np.isclose(c["nbar"], 832.9648649173312, rtol=1e-10)


def test_printed_drift_similarity():
    mech, cav, bec = ps.hybrid_set()
    mf = md.mean_fields(mech, cav, bec)
    Kp = md.printed_three_mode_drift(mech, cav, bec, mf)
    S = md.printed_basis_scales(mech)
    Kd = np.diag(1 / S) @ Kp @ np.diag(S)
    # same spectrum: only a change of units and an ordering
    ev1 = np.sort_complex(np.linalg.eigvals(Kp))
    ev2 = np.sort_complex(np.linalg.eigvals(md.build_three_mode(mech, cav, bec).K))
    assert np.allclose(ev1, ev2, rtol=1e-9)
    assert np.allclose(np.sort_complex(np.linalg.eigvals(Kd)), ev2, rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(0.01, 10))
def test_intensity_root_solves_cubic(d0, kappa, eta):
    s = 1.0
    n, branch = md._solve_intensity(s, d0, kappa, eta)
    assert n >= 0
    assert abs(n * ((d0 - s * n) ** 2 + kappa**2) - eta**2) <= 1e-9 * max(eta**2, 1)
    assert branch in ("monostable", "bistable_low", "bistable_high")


def test_bistable_region_flagged():
    # three positive roots exist for d0 >> kappa with moderate pump
    n, branch = md._solve_intensity(1.0, 10.0, 1.0, 6.0)
    roots = np.roots([1.0, -20.0, 101.0, -36.0])
    assert np.allclose(np.sort(roots.real)[0], n)
    assert branch == "bistable_low"


def test_mean_field_residuals_small_with_bare_detuning():
    mech, cav, bec = ps.hybrid_set()
    cav2 = md.CavityParams(length=cav.length, pump_power=cav.pump_power,
                           pump_wavelength=cav.pump_wavelength, finesse=cav.finesse,
                           bare_detuning=2.5 * mech.omega_m, chi=cav.chi)
    mf = md.mean_fields(mech, cav2, bec)
    ra, rd = md.mean_field_residuals(mech, cav2, bec, mf)
    assert ra < 1e-12 and rd < 1e-12
    assert mf.delta < 2.5 * mech.omega_m


def test_bogoliubov_amplitudes_normalised():
    a, b = md.bogoliubov_amplitudes(1.0, 0.7)
    assert np.isclose(a**2 - b**2, 1.0)
    assert md.bogoliubov_amplitudes(1.0, 0.0) == (1.0, 0.0)


def test_rate_inverse():
    mech, cav, _ = ps.hybrid_set()
    assert np.isclose(md.optomechanical_rate(mech, cav), 100.0)
    assert np.isclose(md.chi_for_rate(100.0, mech), cav.chi)


def test_invalid_params_rejected():
    with pytest.raises(ArgumentError):
        md.MechanicalParams(omega_m=-1, mass=1, gamma=1, temperature=1)
    with pytest.raises(ArgumentError):
        md.CavityParams(length=1e-3, pump_power=1e-3, pump_wavelength=1e-6,
                        finesse=1e4, kappa_override=1e6, detuning=0.0)
    with pytest.raises(ArgumentError):
        md.BecParams(omega_b=1.0, zeta=-1.0)


def test_hybrid_model_stable_and_physical():
    mech, cav, bec = ps.hybrid_set()
    model = md.build_three_mode(mech, cav, bec)
    assert gc.is_stable(model.K)
    assert np.isclose(gc.slowest_decay_rate(model.K), 157.075, rtol=1e-4)
    V = gc.solve_lyapunov(model.K, model.D)
    assert gc.is_physical(V)
