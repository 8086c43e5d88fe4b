import math

import numpy as np
import pytest

from wqed.errors import ConfigError, ConvergenceError
from wqed.model import PhysicalParams, WavepacketSpec
from wqed.single_ex import n1_transmission
from wqed.two_ex import (
    DetectionInitial,
    KGrid2,
    TwoExcitationEngine,
    TwoPhotonInitial,
    cpm,
    detection_ratio,
    eigen_alpha,
    eigen_beta,
    eigen_phi,
    jump_residuals,
    n2_beta_quadrature,
    n2_concurrence_trace,
    n2_phi_quadrature,
    n2_populations,
    n2_project,
    n2_project_closed,
    n2_t0_identity,
    two_photon_rr_probability,
)

from conftest import left, right

MU_DET = 1.0 / 3000.0

# Cascaded master-equation references (independent of the eigenstate
# expansion): P_RR for the detection state, keyed by (gamma/mu, xi).
CASCADE_P_RR = {
    (0.5, 1.0): 0.5465200733094477,
    (2.0, 1.0): 0.4581251041316112,
    (0.5, 0.0): 0.2732600366549604,
    (0.5, 1j): 0.273260036654403,
    (1.0, -2.0): 0.05275834305236437,
}
# Two counter-propagating photons (mu = gamma/2, delay 3/gamma):
# gamma t -> (rho_gs, rho_plus, rho_beta)
CASCADE_DELAY3 = {
    1.0: (0.8160602794040303, 0.18393972059596955, 0.0),
    2.0: (0.7293294334947966, 0.2706705665052031, 0.0),
    4.0: (0.7346960163512658, 0.22179753497505655, 0.04350644867367765),
    6.0: (0.7511642372310001, 0.20718200458512942, 0.04165375818387047),
    10.0: (0.9709737805114851, 0.027186427776453796, 0.0018397917120614364),
}


def detection_params(ratio, mu=MU_DET):
    g = ratio * mu
    return PhysicalParams(1.0, g, 1.0), right(mu, 1e-3 / g)


def gen_initial(delta, mu=0.005):
    return TwoPhotonInitial(right(mu), left(mu, delta))


# ------------------------------------------------------------ eigenstates


class TestEigenstateAmplitudes:
    def test_cpm(self, params):
        assert cpm(params, 1.0, "+") == pytest.approx(0.005j)
        k = 1.013
        assert np.conj(cpm(params, k, "+")) == pytest.approx(cpm(params, k, "-"))
        assert cpm(params, k, "-") / cpm(params, k, "+") == pytest.approx(n1_transmission(params, k))

    def test_beta_examples(self, params):
        assert eigen_beta(params, 1.0, 1.0) == pytest.approx(-16 / params.gamma)
        assert eigen_beta(params, 1.01, 0.97) == pytest.approx(eigen_beta(params, 0.97, 1.01))
        assert abs(eigen_beta(params, 1e3, 1.0)) < 1e-3 * abs(eigen_beta(params, 1.0, 1.0))

    def test_alpha_incoming_branch(self, params):
        k1, k2, x = 1.004, 0.991, -37.0
        g = params.gamma
        expect = 2 * math.sqrt(g) * (np.exp(1j * k1 * x) / cpm(params, k2, "+")
                                     + np.exp(1j * k2 * x) / cpm(params, k1, "+"))
        assert eigen_alpha(params, x, k1, k2) == pytest.approx(expect)

    def test_alpha_jump(self, params, rng):
        for k1, k2 in 1.0 + rng.normal(0, 0.02, (20, 2)):
            jump = 1j * params.v_g * (eigen_alpha(params, 1e-300, k1, k2)
                                      - eigen_alpha(params, -1e-300, k1, k2))
            rhs = params.V * eigen_beta(params, k1, k2)
            assert abs(jump - rhs) <= 1e-10 * abs(rhs)

    def test_alpha_free_limit_continuous(self):
        p = PhysicalParams(1.0, 1e-12, 1.0)
        k1, k2 = 1.3, 0.8
        a_out = eigen_alpha(p, 1e-9, k1, k2)
        a_in = eigen_alpha(p, -1e-9, k1, k2)
        assert abs(a_out - a_in) < 1e-6 * abs(a_in)

    def test_phi_diagonal_incoming(self, params):
        k1, k2, x = 1.02, 0.99, -12.5
        assert eigen_phi(params, x, x, k1, k2) == pytest.approx(2 * np.exp(1j * (k1 + k2) * x))

    def test_phi_resonant_transmission(self, params):
        x1, x2 = -3.0, 5.0
        free = np.exp(1j * (x1 + x2)) * 2
        assert eigen_phi(params, x1, x2, 1.0, 1.0) == pytest.approx(-free)

    def test_phi_jump(self, params, rng):
        for (k1, k2), x in zip(1.0 + rng.normal(0, 0.02, (20, 2)), rng.uniform(-300, 300, 20)):
            jump = 1j * params.v_g * (eigen_phi(params, 1e-300, x, k1, k2)
                                      - eigen_phi(params, -1e-300, x, k1, k2))
            rhs = 0.5 * params.V * eigen_alpha(params, x, k1, k2)
            assert abs(jump - rhs) <= 1e-9 * abs(rhs)

    def test_phi_symmetric(self, params, rng):
        x = rng.uniform(-200, 200, (30, 2))
        k = 1.0 + rng.normal(0, 0.02, (30, 2))
        a = eigen_phi(params, x[:, 0], x[:, 1], k[:, 0], k[:, 1])
        b = eigen_phi(params, x[:, 1], x[:, 0], k[:, 0], k[:, 1])
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


class TestJumpSuite:
    def samples(self, params, rng, n=24):
        g = params.gamma
        for _ in range(n):
            k1, k2 = 1.0 + rng.normal(0, 3 * g, 2)
            x = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 5.0) / g
            yield k1, k2, x

    def test_all_relations_hold(self, params, rng):
        names = set()
        for k1, k2, x in self.samples(params, rng):
            res = jump_residuals(params, k1, k2, x)
            names |= set(res)
            assert max(res.values()) <= 1e-8, res
        assert names == {"beta_alpha0", "phi_jump", "free_region", "alpha_jump", "edge_derivative"}

    def test_negative_control(self, params, rng):
        worst = max(max(jump_residuals(params, k1, k2, x, bound_term=False).values())
                    for k1, k2, x in self.samples(params, rng))
        assert worst > 1e-3


# ------------------------------------------------------------ projection


class TestProjection:
    def test_dark_input_has_no_eps5(self):
        p, photon = detection_params(0.5)
        st = n2_project(p, DetectionInitial(photon, -1.0))
        assert not np.any(st.f5) and not np.any(st.f1) and not np.any(st.f4)
        assert st.minus_weight() == pytest.approx(1.0, abs=1e-6)

    def test_bright_input_has_no_minus(self):
        p, photon = detection_params(0.5)
        st = n2_project(p, DetectionInitial(photon, 1.0))
        assert not np.any(st.f2) and not np.any(st.f3)

    def test_unsupported_initial(self, params):
        with pytest.raises(ConfigError):
            n2_project(params, right(0.005))

    def test_initial_state_directions(self):
        with pytest.raises(ConfigError):
            TwoPhotonInitial(left(0.005), left(0.005))
        with pytest.raises(ConfigError):
            DetectionInitial(left(0.005), 0.3)

    @pytest.mark.parametrize("which", ["generation", "detection"])
    def test_t0_identity(self, params, which):
        if which == "generation":
            ini = gen_initial(300.0)
        else:
            ini = DetectionInitial(right(0.005, 0.1), 0.7)
        res = n2_t0_identity(params, n2_project(params, ini))
        assert max(res.values()) <= 1e-6, res

    def test_round_trip_two_photon_wavefunction(self, params):
        """Grid reconstruction of the t=0 even-even amplitude against the
        product form of the two incoming packets."""
        ini = gen_initial(50.0)
        st = n2_project(params, ini, KGrid2.uniform(1.0, 0.5, 2048), tol=1.0)
        eng = TwoExcitationEngine(params, st.sectors, 10.0)
        s1 = np.array([250.0, 400.0, 300.0])
        s2 = np.array([400.0, 250.0, 300.0])
        grid = n2_phi_quadrature(params, st, -s1, -s2)
        direct = eng.phi_ee(0.0, s1, s2)
        np.testing.assert_allclose(grid, direct, rtol=0, atol=1e-5)
        # boson symmetry of the reconstruction
        assert abs(grid[0] - grid[1]) <= 1e-8 * abs(grid[0])

    def test_beta_dual_route(self, params):
        ini = gen_initial(300.0)
        st = n2_project(params, ini)
        eng = TwoExcitationEngine(params, st.sectors, 1000.0)
        ts = np.array([100.0, 400.0, 700.0])
        np.testing.assert_allclose(n2_beta_quadrature(params, st, ts), eng.beta(ts), atol=2e-3)


# ----------------------------------------------------------- populations


class TestPopulations:
    def test_generation_never_populates_minus(self, params):
        st = n2_project_closed(params, gen_initial(300.0))
        tr = n2_concurrence_trace(params, st, np.linspace(0, 1500, 31))
        assert np.max(np.abs(tr.rho_minus)) == 0.0

    def test_detection_minus_constant(self, params):
        xi = 0.3 - 0.4j
        st = n2_project_closed(params, DetectionInitial(right(0.005, 0.1), xi))
        tr = n2_concurrence_trace(params, st, np.linspace(0, 1500, 16))
        expect = abs(1 - xi) ** 2 / (2 * (1 + abs(xi) ** 2))
        np.testing.assert_allclose(tr.rho_minus, expect, atol=1e-9)

    def test_full_decay(self, params):
        st = n2_project_closed(params, gen_initial(300.0))
        pops = n2_populations(params, st, 300.0 + 20 / params.gamma)
        assert pops.rho_plus < 1e-3 and pops.rho_beta < 1e-3
        assert pops.rho_gs == pytest.approx(1.0, abs=1e-3)

    def test_simultaneous_photons_never_entangle(self, params):
        st = n2_project_closed(params, gen_initial(0.0))
        tr = n2_concurrence_trace(params, st, np.linspace(0, 2500, 251))
        assert np.max(tr.concurrence) <= 1e-6

    def test_cascade_reference_delay(self, params):
        st = n2_project_closed(params, gen_initial(300.0))
        ts = np.array(sorted(CASCADE_DELAY3)) / params.gamma
        tr = n2_concurrence_trace(params, st, ts)
        ref = np.array([CASCADE_DELAY3[k] for k in sorted(CASCADE_DELAY3)])
        np.testing.assert_allclose(tr.rho_gs, ref[:, 0], atol=1e-8)
        np.testing.assert_allclose(tr.rho_plus, ref[:, 1], atol=1e-8)
        np.testing.assert_allclose(tr.rho_beta, ref[:, 2], atol=1e-8)

    def test_competitor_relation(self, params):
        st = n2_project_closed(params, gen_initial(300.0))
        tr = n2_concurrence_trace(params, st, np.linspace(0, 2000, 101))
        np.testing.assert_allclose(tr.concurrence, np.maximum(0, tr.rho_plus - tr.competitor), atol=1e-10)

    @pytest.mark.parametrize("which", ["generation", "detection"])
    def test_conservation(self, params, which):
        ini = gen_initial(300.0) if which == "generation" else DetectionInitial(right(0.005, 0.1), 0.7)
        eng = TwoExcitationEngine(params, n2_project_closed(params, ini).sectors, 3000.0)
        for t in np.linspace(0, 3000, 7):
            pops = eng.populations(t)
            assert pops.as_array().sum() == pytest.approx(1.0, abs=1e-6)
            assert eng.photon_norm(t) == pytest.approx(pops.rho_gs, abs=1e-6)
            pops.validate()


# -------------------------------------------------------------- detection


class TestDetection:
    @pytest.mark.parametrize("key", sorted(CASCADE_P_RR, key=str))
    def test_cascade_reference(self, key):
        p, photon = detection_params(key[0])
        st = n2_project_closed(p, DetectionInitial(photon, key[1]))
        assert two_photon_rr_probability(p, st) == pytest.approx(CASCADE_P_RR[key], abs=1e-9)

    def test_dark_input_never_reflects_both(self):
        p, photon = detection_params(0.5)
        st = n2_project_closed(p, DetectionInitial(photon, -1.0))
        assert abs(two_photon_rr_probability(p, st)) <= 1e-6

    @pytest.mark.parametrize("xi", [0.0, 0.5, -2.0, 1j, 0.3 + 0.8j])
    def test_two_photon_weight(self, xi):
        p, photon = detection_params(2.0)
        st = n2_project_closed(p, DetectionInitial(photon, xi))
        total = sum(two_photon_rr_probability(p, st, full=True))
        assert total == pytest.approx(abs(1 + xi) ** 2 / (2 * (1 + abs(xi) ** 2)), abs=1e-4)

    def test_ratio_rows(self):
        p, photon = detection_params(0.5)
        rows = detection_ratio(p, [0.0, 1.0, -0.5, 1j], photon)
        assert rows[0].ratio == 0.0
        assert rows[1].p_rr / rows[0].p_rr == pytest.approx(2.0, abs=1e-3)
        assert rows[2].ratio == pytest.approx(abs(rows[2].bound), abs=1e-3)
        assert rows[3].ratio == pytest.approx(0.0, abs=1e-3) and rows[3].concurrence == 1.0

    def test_front_condition(self):
        p, _ = detection_params(0.5)
        with pytest.raises(ConfigError):
            detection_ratio(p, [1.0], right(MU_DET, 10.0 / p.gamma))

    def test_floor_guard(self):
        p, photon = detection_params(0.5)
        with pytest.raises(ConvergenceError):
            detection_ratio(p, [1.0], photon, floor=1.0)

    def test_non_convergence(self):
        p, photon = detection_params(0.5)
        st = n2_project_closed(p, DetectionInitial(photon, 1.0))
        with pytest.raises(ConvergenceError):
            two_photon_rr_probability(p, st, T_end=photon.front + 0.5 / p.gamma)
