import math

import numpy as np
import pytest

from wqed.errors import GridCoverageError
from wqed.model import PhysicalParams, WavepacketSpec, wavepacket_amplitude
from wqed.single_ex import (
    KGrid,
    n1_eigen_residual,
    n1_eigenstate_qubit_amplitude,
    n1_evolve_trace,
    n1_photon_norm,
    n1_project,
    n1_qubit_amplitude,
    n1_reconstruct,
    n1_transmission,
)

from conftest import left, right

# peak of rho_plus for mu = gamma/2, from a cascaded master-equation
# integration (source cavity feeding the qubit pair); equals 2/e^2
PEAK_HALF_GAMMA = 0.27067056647573295


def test_transmission_examples(params):
    assert n1_transmission(params, 1.0) == pytest.approx(-1.0)
    assert n1_transmission(params, 1.0 + 0.005) == pytest.approx(-1j)


def test_transmission_unit_modulus(params, rng):
    k = 1.0 + rng.normal(0, 0.05, 50)
    np.testing.assert_allclose(np.abs(n1_transmission(params, k)), 1.0, atol=1e-14)


def test_qubit_amplitude_at_resonance(params):
    assert n1_eigenstate_qubit_amplitude(params, 1.0) == pytest.approx(-2j / math.sqrt(0.01))


def test_qubit_amplitude_lorentzian_fwhm(params):
    g = params.gamma
    peak = abs(n1_eigenstate_qubit_amplitude(params, 1.0)) ** 2
    half = abs(n1_eigenstate_qubit_amplitude(params, 1.0 + g / 2)) ** 2
    assert half == pytest.approx(peak / 2)


def test_qubit_amplitude_decouples():
    p = PhysicalParams(1.0, 0.0, 1.0)
    assert n1_eigenstate_qubit_amplitude(p, 1.02) == 0


def test_eigen_residual_random_k(params, rng):
    for k in 1.0 + rng.normal(0, 3 * params.gamma, 20):
        assert n1_eigen_residual(params, k) <= 1e-6


def test_projection_norm_and_odd_half(params):
    st = n1_project(params, right(0.005))
    assert st.norm() == pytest.approx(1.0, abs=1e-8)
    w = st.kgrid.weights / (2 * math.pi)
    assert np.sum(w * np.abs(st.odd_photon_coeffs) ** 2) == pytest.approx(0.5, abs=1e-8)


def test_projection_coverage_error(params):
    with pytest.raises(GridCoverageError):
        n1_project(params, right(0.005), KGrid.uniform(1.0, 0.002, 64))


def test_round_trip_reconstruction(params):
    spec = right(0.005, front=100.0)
    st = n1_project(params, spec, KGrid.uniform(1.0, 400.0, 2 ** 20), tol=1.0)
    # probes sit away from the sharp front, where the truncated transform rings
    x = np.array([-250.0, -400.0, -700.0, 0.0, 60.0])
    even, odd = n1_reconstruct(params, st, x)
    np.testing.assert_allclose((even + odd) / math.sqrt(2), wavepacket_amplitude(spec, x), rtol=0, atol=1e-6)
    np.testing.assert_allclose((even - odd) / math.sqrt(2), 0.0, atol=1e-6)


def test_leftward_photon_uses_odd_sign(params):
    ts = np.linspace(0, 800, 41)
    a = n1_evolve_trace(params, n1_project(params, right(0.005)), ts)
    b = n1_evolve_trace(params, n1_project(params, left(0.005)), ts)
    np.testing.assert_allclose(a.rho_plus, b.rho_plus, atol=1e-12)


def test_generation_peak_reference(params):
    tr = n1_evolve_trace(params, n1_project(params, right(0.005)), [200.0])
    assert tr.concurrence[0] == pytest.approx(PEAK_HALF_GAMMA, abs=1e-10)


def test_generation_peaks_and_ordering(params):
    ts = np.linspace(0, 2500, 2001)
    peaks = {}
    for mu in (0.005, 0.02, 0.01 / 15):
        peaks[mu] = n1_evolve_trace(params, n1_project(params, right(mu)), ts).peak()
    assert peaks[0.005] == pytest.approx(0.27, abs=0.02)
    assert peaks[0.005] > peaks[0.02]
    assert peaks[0.005] > peaks[0.01 / 15]


def test_nothing_before_arrival(params):
    spec = right(0.005, front=400.0)
    tr = n1_evolve_trace(params, n1_project(params, spec), np.linspace(0, 400, 50))
    assert np.max(tr.concurrence) <= 1e-6


def test_translation_invariance(params):
    base = np.linspace(0, 1500, 301)
    a = n1_evolve_trace(params, n1_project(params, right(0.005, 10.0)), base + 10.0)
    b = n1_evolve_trace(params, n1_project(params, right(0.005, 1266.0)), base + 1266.0)
    np.testing.assert_allclose(a.concurrence, b.concurrence, atol=1e-6)


def test_quadrature_route_matches_contour(params):
    """Dual route: momentum-grid sum against the residue evaluation."""
    ts = np.linspace(0, 2500, 251)
    for mu in (0.005, 0.02, 0.01 / 15):
        st = n1_project(params, right(mu))
        c = n1_qubit_amplitude(params, st, ts, "contour")
        q = n1_qubit_amplitude(params, st, ts, "quadrature")
        assert np.max(np.abs(np.abs(c) ** 2 - np.abs(q) ** 2)) < 5e-3


def test_unknown_method(params):
    st = n1_project(params, right(0.005))
    with pytest.raises(ValueError):
        n1_qubit_amplitude(params, st, [0.0], "fft")


def test_norm_conservation(params):
    st = n1_project(params, right(0.005, 30.0))
    ts = np.linspace(0, 3000, 13)
    tr = n1_evolve_trace(params, st, ts)
    for t, rp in zip(ts, tr.rho_plus):
        assert n1_photon_norm(params, st, t) + rp == pytest.approx(1.0, abs=1e-8)


def test_full_decay(params):
    st = n1_project(params, right(0.005))
    tr = n1_evolve_trace(params, st, [20.0 / params.gamma + 1200.0])
    assert tr.rho_plus[0] < 1e-3
    assert tr.rho_gs[0] == pytest.approx(1.0, abs=1e-3)
