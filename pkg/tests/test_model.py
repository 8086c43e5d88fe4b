import math

import numpy as np
import pytest
from scipy.integrate import quad

from wqed.errors import ConfigError
from wqed.model import (
    ConcurrenceTrace,
    Direction,
    PhysicalParams,
    QubitBasisPopulations,
    TwoQubitDensityMatrix,
    WavepacketSpec,
    assemble_density_matrix,
    concurrence_from_pops,
    wavepacket_amplitude,
    wavepacket_momentum_amplitude,
    wootters_concurrence,
    x_state_concurrence,
    xi_concurrence,
)


class TestPhysicalParams:
    def test_derived_quantities(self):
        p = PhysicalParams(1.0, 0.04, 2.0)
        assert p.V == pytest.approx(math.sqrt(0.08))
        assert p.wavelength == pytest.approx(4 * math.pi)

    @pytest.mark.parametrize("kw", [dict(omega_q=0.0), dict(v_g=-1.0), dict(gamma=-0.1),
                                    dict(gamma=1.5), dict(omega_q=float("nan"))])
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ConfigError):
            PhysicalParams(**kw)

    def test_gamma_zero_is_the_decoupled_limit(self):
        assert PhysicalParams(gamma=0.0).V == 0.0


class TestWavepacket:
    def test_rejects_negative_front(self):
        with pytest.raises(ConfigError):
            WavepacketSpec(0.01, 1.0, -1.0)

    def test_rejects_nonpositive_mu(self):
        with pytest.raises(ConfigError):
            WavepacketSpec(0.0)

    def test_support_and_front_value(self):
        spec = WavepacketSpec(0.005, 1.0, 30.0)
        assert wavepacket_amplitude(spec, -29.0) == 0
        assert abs(wavepacket_amplitude(spec, -30.0)) == pytest.approx(math.sqrt(0.01))

    def test_leftward_is_mirror(self):
        r = WavepacketSpec(0.02, 1.0, 5.0)
        l = WavepacketSpec(0.02, 1.0, 5.0, Direction.LEFTWARD)
        x = np.linspace(-80, 80, 41)
        np.testing.assert_allclose(wavepacket_amplitude(l, x), wavepacket_amplitude(r, -x))

    def test_normalization_at_generation_point(self):
        lam = 2 * math.pi
        spec = WavepacketSpec(0.005, 1.0, 200 * lam)
        f = lambda x: abs(wavepacket_amplitude(spec, x)) ** 2
        val, _ = quad(f, -spec.front - 8000, -spec.front, limit=400, epsabs=1e-13)
        tail = math.exp(-2 * 0.005 * 8000)
        assert val + tail == pytest.approx(1.0, abs=1e-10)

    def test_momentum_amplitude_at_carrier(self):
        spec = WavepacketSpec(0.02, 1.0, 0.0)
        assert wavepacket_momentum_amplitude(spec, 1.0) == pytest.approx(math.sqrt(2 / 0.02))

    def test_momentum_amplitude_matches_defining_integral(self):
        spec = WavepacketSpec(0.3, 1.0, 2.0)
        for k in (0.7, 1.0, 1.45):
            re, _ = quad(lambda x: (wavepacket_amplitude(spec, x) * np.exp(-1j * k * x)).real,
                         -200, -2.0, limit=400)
            im, _ = quad(lambda x: (wavepacket_amplitude(spec, x) * np.exp(-1j * k * x)).imag,
                         -200, -2.0, limit=400)
            assert abs(complex(re, im) - wavepacket_momentum_amplitude(spec, k)) < 1e-8

    def test_parseval_on_dense_grid(self):
        spec = WavepacketSpec(0.01, 1.0, 50.0)
        # substitute k = 1 + mu tan(u): the Lorentzian becomes flat
        n = 200000
        h = math.pi / n
        u = -math.pi / 2 + h * (np.arange(n) + 0.5)
        k = 1.0 + 0.01 * np.tan(u)
        jac = 0.01 / np.cos(u) ** 2
        val = h * np.sum(np.abs(wavepacket_momentum_amplitude(spec, k)) ** 2 * jac) / (2 * math.pi)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_momentum_peak_at_carrier(self):
        spec = WavepacketSpec(0.01, 1.2, 3.0)
        k = np.linspace(1.0, 1.4, 4001)
        assert k[np.argmax(np.abs(wavepacket_momentum_amplitude(spec, k)))] == pytest.approx(1.2)


class TestConcurrence:
    def test_wootters_examples(self):
        plus = np.diag([0, 1, 0, 0]).astype(complex)
        gg = np.diag([1, 0, 0, 0]).astype(complex)
        assert wootters_concurrence(TwoQubitDensityMatrix(plus)) == pytest.approx(1.0)
        assert wootters_concurrence(TwoQubitDensityMatrix(gg)) == pytest.approx(0.0, abs=1e-12)
        mix = 0.5 * plus + 0.5 * gg
        assert wootters_concurrence(TwoQubitDensityMatrix(mix)) == pytest.approx(0.5, abs=1e-12)

    def test_wootters_half_plus_brute_force(self):
        # brute force: eigenvalues of rho rho~ in the computational basis
        rho = TwoQubitDensityMatrix(np.diag([0.5, 0.5, 0, 0]).astype(complex))
        r = rho.computational()
        yy = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
        lam = np.sqrt(np.clip(np.sort(np.linalg.eigvals(r @ yy @ r.conj() @ yy).real)[::-1], 0, None))
        assert max(0.0, lam[0] - lam[1:].sum()) == pytest.approx(0.5, abs=1e-12)

    def test_wootters_rejects_bad_trace(self):
        with pytest.raises(ValueError):
            wootters_concurrence(TwoQubitDensityMatrix(np.diag([1.0, 0.5, 0, 0])))

    def test_wootters_rejects_non_hermitian(self):
        m = np.diag([0.5, 0.5, 0, 0]).astype(complex)
        m[0, 1] = 0.1
        with pytest.raises(ValueError):
            wootters_concurrence(TwoQubitDensityMatrix(m))

    @pytest.mark.parametrize("pops,expected", [((1, 0, 0, 0), 0.0), ((0.5, 0.5, 0, 0), 0.5),
                                               ((0.4, 0.2, 0, 0.4), 0.0)])
    def test_x_state(self, pops, expected):
        assert x_state_concurrence(QubitBasisPopulations(*pops)) == pytest.approx(expected)

    def test_x_state_guard(self):
        with pytest.raises(ValueError):
            x_state_concurrence(QubitBasisPopulations(0.5, 0.25, 0.25, 0.0))
        with pytest.raises(ValueError):
            x_state_concurrence(QubitBasisPopulations(0.5, 0.5, 0.0, 0.0, coh_pm=1e-3))

    @pytest.mark.parametrize("xi,expected", [(1, 1.0), (0, 0.0), (2, 0.8), (1j, 1.0),
                                             (float("inf"), 0.0)])
    def test_xi_concurrence(self, xi, expected):
        assert xi_concurrence(xi) == pytest.approx(expected)

    def test_assemble_examples(self):
        np.testing.assert_allclose(
            assemble_density_matrix(QubitBasisPopulations(1, 0, 0, 0)).entries, np.diag([1, 0, 0, 0]))
        rho = assemble_density_matrix(QubitBasisPopulations(0, 1, 0, 0))
        assert wootters_concurrence(rho) == pytest.approx(1.0)
        flat = assemble_density_matrix(QubitBasisPopulations(0.25, 0.25, 0.25, 0.25))
        assert wootters_concurrence(flat) == pytest.approx(0.0, abs=1e-12)

    def test_assemble_places_coherence(self):
        rho = assemble_density_matrix(QubitBasisPopulations(0.5, 0.25, 0.25, 0.0, 0.1 + 0.1j))
        assert rho.entries[1, 2] == 0.1 + 0.1j
        assert rho.entries[2, 1] == 0.1 - 0.1j

    def test_pure_detection_state_concurrence(self):
        # (sigma1^+ + xi sigma2^+)|0>/n: rho_+ = |1+xi|^2/2n^2, rho_- = |1-xi|^2/2n^2
        for xi in (0.3, -2.0, 1j, 0.5 - 0.7j):
            n2 = 1 + abs(xi) ** 2
            pops = QubitBasisPopulations(0.0, abs(1 + xi) ** 2 / (2 * n2),
                                         abs(1 - xi) ** 2 / (2 * n2), 0.0,
                                         (1 + xi) * np.conj(1 - xi) / (2 * n2))
            assert concurrence_from_pops(pops) == pytest.approx(xi_concurrence(xi), abs=1e-9)

    def test_density_matrix_validate(self):
        with pytest.raises(ValueError):
            TwoQubitDensityMatrix(np.eye(3))
        with pytest.raises(ValueError):
            TwoQubitDensityMatrix(np.diag([1.2, -0.2, 0, 0])).validate()


def test_trace_fills_concurrence_and_competitor():
    t = np.linspace(0, 1, 3)
    tr = ConcurrenceTrace(t, [0.5, 0.6, 0.8], [0.5, 0.3, 0.1], [0, 0, 0], [0, 0.1, 0.1],
                          np.zeros(3))
    np.testing.assert_allclose(tr.competitor, 2 * np.sqrt(np.array([0, 0.06, 0.08])))
    np.testing.assert_allclose(tr.concurrence, np.maximum(0, tr.rho_plus - tr.competitor),
                               atol=1e-10)
    np.testing.assert_allclose(tr.total(), 1.0)
    assert tr.peak() == pytest.approx(0.5)
