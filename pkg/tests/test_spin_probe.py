import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import eval_hermite, gammaln

from optomech_lab import fock
from optomech_lab import spin_probe as sp
from optomech_lab.errors import ArgumentError, CutoffError

N_ATOMS = 1000


@pytest.fixture(scope="module")
def probe():
    return sp.default_probe()


@pytest.fixture(scope="module")
def rotor():
    return sp.RotorInitial(0.0, 0.0, 100.0, N_ATOMS)


# -- gyroscopic coefficients -------------------------------------------------


def test_gyro_identity_at_zero_time(probe):
    q = np.linspace(-5, 5, 11) * probe.a_c
    a1, a2, a3 = sp.gyro_coefficients(q, 0.0, probe)
    assert np.allclose(a1, 1) and np.allclose(a2, 0) and np.allclose(a3, 0)


def test_gyro_pure_larmor_without_gradient():
    p = sp.ProbeParams(b_z0=3e-12, grad=0.0, omega_m=0.03, a_c=1e-16)
    t = np.linspace(0, 200, 50)
    a1, a2, a3 = sp.gyro_coefficients(3e-16, t, p)
    wl = p.omega_larmor
    assert np.allclose(a1, np.cos(wl * t)) and np.allclose(a2, np.sin(wl * t))
    assert np.allclose(a3, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 500))
def test_gyro_row_is_rotation_row(x, t):
    # (a1, a2, a3) is the first row of the rotation about the total field, so
    # it has unit length for every q.
    p = sp.default_probe(ratio=0.3)
    a = np.array(sp.gyro_coefficients(x * p.a_c, t, p))
    assert np.isclose(np.sum(a**2), 1.0, atol=1e-12)


def test_probe_parameter_checks():
    with pytest.raises(ArgumentError):
        sp.ProbeParams(b_z0=0.0, grad=1.0, omega_m=1.0, a_c=1e-16)
    with pytest.raises(ArgumentError):
        sp.ProbeParams(b_z0=1e-12, grad=1.0, omega_m=1.0)
    with pytest.raises(ArgumentError):
        sp.ProbeParams(b_z0=1e-12, grad=1.0, omega_m=1.0, a_c=1e-16, mass=1e-12)
    p = sp.ProbeParams(b_z0=1e-12, grad=1.0, omega_m=1e5, mass=1e-15)
    assert np.isclose(p.a_c, np.sqrt(sp.HBAR / (2 * 1e-15 * 1e5)))
    with pytest.raises(ArgumentError):
        sp.RotorInitial(0, 0, 2000, 1000)


# -- states --------------------------------------------------------------------


def test_hermite_functions_match_closed_form():
    x = np.linspace(-6, 6, 41)
    psi = sp.hermite_functions(x, 30)
    for n in (0, 1, 5, 17, 29):
        ref = (np.exp(-x**2 / 2) * eval_hermite(n, x)
               / np.exp(0.5 * (n * np.log(2) + gammaln(n + 1) + 0.5 * np.log(np.pi))))
        assert np.allclose(psi[n], ref, atol=1e-12)


def test_hermite_recurrence_stable_and_orthonormal():
    x, w = np.polynomial.hermite.hermgauss(260)
    psi = sp.hermite_functions(x, 200)
    gram = (psi * (w * np.exp(x**2))) @ psi.T
    assert np.abs(gram - np.eye(200)).max() < 1e-9


def test_coherent_coefficients():
    vac = sp.coherent_coefficients(0)
    assert np.isclose(vac.rho[0, 0], 1.0) and np.isclose(np.trace(vac.rho).real, 1.0)
    for a in (1.0, np.sqrt(5) * np.exp(0.3j), np.sqrt(20)):
        s = sp.coherent_coefficients(a)
        assert abs(np.trace(s.rho).real - 1) < 1e-10
        assert s.tail_mass <= sp.TAIL_TOL
        ref = fock.coherent(a, s.cutoff)
        ref = ref / np.linalg.norm(ref)
        assert np.allclose(s.rho, np.outer(ref, ref.conj()), atol=1e-12)
    with pytest.raises(CutoffError):
        sp.coherent_coefficients(2.0, cutoff=10)


def test_state_validation():
    with pytest.raises(ArgumentError):
        sp.CantileverState.pure([1.0, 1.0])
    with pytest.raises(ArgumentError):
        sp.CantileverState.density(np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(CutoffError):
        sp.CantileverState.thermal(5.0, cutoff=10)
    th = sp.CantileverState.thermal(2.0)
    assert th.tail_mass <= sp.TAIL_TOL and np.isclose(np.trace(th.rho).real, 1)


# -- <L_x(t)> ------------------------------------------------------------------


def brute_force_lx(state, rotor, probe, t):
    """Adaptive quadrature over q of the position-resolved precession."""
    psi_scale = np.sqrt(2.0) * probe.a_c
    dim = state.cutoff
    out = []
    for s in t:
        def integrand(x, j):
            psi = sp.hermite_functions(np.array([x]), dim)[:, 0]
            ph = np.exp(-1j * probe.omega_m * np.arange(dim) * s)
            f = np.real(np.conj(ph * psi) @ state.rho.T @ (ph * psi))
            return f * sp.gyro_coefficients(psi_scale * x, s, probe)[j]
        A = [quad(integrand, -12, 12, args=(j,), limit=200, epsabs=1e-13)[0] for j in range(3)]
        out.append(np.dot(A, rotor.vector))
    return np.array(out)


def test_lx_matches_adaptive_quadrature(probe, rotor):
    state = sp.superposition_012(0.7 * np.exp(1j * np.pi / 6))
    t = np.linspace(0, 100, 7)
    tr = sp.lx_expectation(state, rotor, probe, t)
    ref = brute_force_lx(state, rotor, probe, t)
    assert np.allclose(tr.lx, ref, atol=1e-9 * N_ATOMS)


def test_eigen_route_matches_double_sum(probe):
    state = sp.coherent_coefficients(1.3 + 0.4j)
    t = np.linspace(0, 80, 5)
    fast = sp.coefficient_averages(state, probe, t)
    slow = sp.coefficient_averages_direct(state, probe, t)
    assert np.allclose(fast, slow.real, atol=1e-12)
    assert np.abs(slow.imag).max() < 1e-12


@pytest.mark.parametrize("state", [
    sp.CantileverState.thermal(0.5),
    sp.CantileverState.thermal(3.0),
    sp.CantileverState.pure([2**-0.5, 0, 2**-0.5]),
    sp.CantileverState.pure([0, 0.6, 0, 0.8j]),
])
def test_single_parity_and_thermal_states_do_not_oscillate(state, probe, rotor):
    tr = sp.lx_expectation(state, rotor, probe)
    assert np.abs(tr.lx).max() <= 1e-10 * N_ATOMS
    assert tr.imag_residue <= 1e-10 * N_ATOMS


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_random_even_states_cancel(seed):
    rng = np.random.default_rng(seed)
    c = np.zeros(12, complex)
    c[::2] = rng.normal(size=6) + 1j * rng.normal(size=6)
    c /= np.linalg.norm(c)
    p = sp.default_probe()
    t = np.linspace(0, 300, 64)
    A = sp.coefficient_averages(sp.CantileverState.pure(c), p, t)
    assert np.abs(A[:, 2]).max() < 1e-12


def test_zero_gradient_is_free_precession(rotor):
    p = sp.ProbeParams(b_z0=3e-12, grad=0.0, omega_m=0.03, a_c=1e-16)
    r = sp.RotorInitial(30.0, -40.0, 50.0, N_ATOMS)
    t = np.linspace(0, 300, 101)
    for state in (sp.coherent_coefficients(2.0), sp.superposition_01(1.0)):
        tr = sp.lx_expectation(state, r, p, t)
        wl = p.omega_larmor
        assert np.allclose(tr.lx, 30 * np.cos(wl * t) - 40 * np.sin(wl * t), atol=1e-10)


def test_lx_bounded_and_quadrature_converged(probe, rotor):
    tr = sp.lx_expectation(sp.coherent_coefficients(np.sqrt(20)), rotor, probe)
    assert np.abs(tr.lx).max() <= np.linalg.norm(rotor.vector) * (1 + 1e-12)
    assert tr.quadrature_change <= 1e-8


def test_cutoff_error_for_truncated_state(probe, rotor):
    bad = sp.CantileverState(np.diag([0.5, 0.3, 0.2]).astype(complex), "density_matrix", 0.2)
    with pytest.raises(CutoffError):
        sp.lx_expectation(bad, rotor, probe)


# -- envelope analysis -----------------------------------------------------------


def test_envelope_peak_at_mechanical_frequency(probe, rotor):
    tr = sp.lx_expectation(sp.superposition_01(1.0), rotor, probe)
    es = sp.envelope_spectrum(tr.times, tr.lx, probe.omega_larmor)
    resolution = 2 * np.pi / (tr.times[-1] - tr.times[0])
    assert abs(es.peak() - probe.omega_m) <= resolution


def test_envelope_amplitude_largest_for_equal_weights(probe, rotor):
    ratios = [0.4, 0.7, 0.9, 1.0, 1.1, 1.4, 2.5]
    amps = []
    for r in ratios:
        tr = sp.lx_expectation(sp.superposition_01(r), rotor, probe, check=False)
        amps.append(sp.envelope_spectrum(tr.times, tr.lx, probe.omega_larmor).amplitude())
    assert ratios[int(np.argmax(amps))] == 1.0
    # reciprocal ratios give the same coherence |C0 C1|
    assert np.isclose(amps[1], sp.envelope_spectrum(
        *(lambda tr: (tr.times, tr.lx))(sp.lx_expectation(sp.superposition_01(1 / 0.7), rotor,
                                                           probe, check=False)),
        probe.omega_larmor).amplitude(), rtol=1e-9)


def test_larger_coherent_amplitude_adds_frequencies(probe, rotor):
    t = sp.default_time_grid(probe, periods=40, points=16000)
    counts = []
    for n2 in (1, 20):
        tr = sp.lx_expectation(sp.coherent_coefficients(np.sqrt(n2)), rotor, probe, t,
                               check=False)
        counts.append(sp.envelope_spectrum(t, tr.lx, probe.omega_larmor).significant_lines(0.05))
    assert counts[1] > counts[0]


def test_csv_outputs(tmp_path, probe, rotor):
    tr = sp.lx_expectation(sp.superposition_01(1.0), rotor, probe, check=False)
    tr.to_csv(tmp_path / "lx.csv")
    back = np.loadtxt(tmp_path / "lx.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1], tr.lx)
    es = sp.envelope_spectrum(tr.times, tr.lx, probe.omega_larmor)
    es.to_csv(tmp_path / "env.csv")
    back = np.loadtxt(tmp_path / "env.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 0], es.omega)
