"""Two-excitation sector.

Eigenstates (energy E = v_g (k1 + k2)):

* eps1  even scattering state k1 (x) free odd photon k2
* eps2  free even photon (x) |->     (|-> is dark, so the even photon is free)
* eps3  free odd photon  (x) |->
* eps4  two free odd photons, symmetrized
* eps5  interacting even-even state: two-photon wavefunction phi, photon +
        superradiant qubit alpha(x), doubly excited qubits beta.

The unitary is  U(t) = (1/2pi) sum_{2,3} int dk e^{-iEt}|><|
+ (1/32pi^2) int int e^{-iEt} (|eps5><eps5| + |eps4><eps4| + 8|eps1><eps1|).

Two evaluation routes exist.  The default ("contour") performs the k
integrals by residues; what remains are one-dimensional causal
convolutions and arrival-time integrals done with Gauss-Legendre panels.
The grid route sums the same expansion over a tensor momentum grid and is
used to cross-check amplitudes and the normalization constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, GridCoverageError
from .kernels import (
    INF,
    CausalConvolution,
    ExpPulse,
    gauss_legendre,
    overlap_matrix,
    panel_nodes,
    pulse_spectrum,
    time_panels,
)
from .model import (
    ConcurrenceTrace,
    Direction,
    PhysicalParams,
    QubitBasisPopulations,
    WavepacketSpec,
    concurrence_from_pops,
    xi_concurrence,
)
from .single_ex import KGrid, even_odd_signs, pulse_from_spec, virtual_pulse

__all__ = [
    "ConcurrenceTrace",
    "KGrid2",
    "SpectralStateN2",
    "TwoPhotonInitial",
    "DetectionInitial",
    "cpm",
    "eigen_beta",
    "eigen_alpha",
    "eigen_phi",
    "jump_residuals",
    "n2_project",
    "n2_populations",
    "n2_concurrence_trace",
    "two_photon_rr_probability",
    "detection_ratio",
    "n2_project_closed",
    "TwoExcitationEngine",
    "n2_beta_quadrature",
    "n2_alpha_quadrature",
    "DetectionRow",
    "n2_t0_identity",
    "n2_phi_quadrature",
]


# ------------------------------------------------------------ eigenstates


def cpm(params: PhysicalParams, k, sign):
    """c^{+/-} = k - Omega/v_g +/- i gamma/(2 v_g)."""
    s = {"+": 1.0, "-": -1.0, 1: 1.0, -1: -1.0}[sign]
    k = np.asarray(k, dtype=float)
    out = k - params.omega_q / params.v_g + s * 0.5j * params.gamma / params.v_g
    return out if out.ndim else complex(out)


def _bound_factor(params, k1, k2):
    """(c1^+ + c2^-)/(c1^+ + c2^+ - i gamma/2v_g), symmetric in k1, k2."""
    g = params.gamma / params.v_g
    c1p, c2p, c2m = cpm(params, k1, "+"), cpm(params, k2, "+"), cpm(params, k2, "-")
    return (c1p + c2m) / (c1p + c2p - 0.5j * g)


def eigen_beta(params: PhysicalParams, k1, k2):
    g = params.gamma / params.v_g
    c1p, c2p = cpm(params, k1, "+"), cpm(params, k2, "+")
    return (2.0 * g / (c1p * c2p)) * (c1p + c2p) / (c1p + c2p - 0.5j * g)


def eigen_alpha(params: PhysicalParams, x, k1, k2):
    """alpha(x) of eps5; x = 0 returns the two-sided mean."""
    x, k1, k2 = np.broadcast_arrays(
        np.asarray(x, float), np.asarray(k1, float), np.asarray(k2, float)
    )
    g = params.gamma / params.v_g
    pre = 2.0 * math.sqrt(g)
    c1p, c2p = cpm(params, k1, "+"), cpm(params, k2, "+")
    c1m, c2m = cpm(params, k1, "-"), cpm(params, k2, "-")
    left = np.exp(1j * k1 * x) / c2p + np.exp(1j * k2 * x) / c1p
    bound = (
        1j * g * _bound_factor(params, k1, k2)
        * np.exp(1j * (k1 + k2) * x)
        * np.exp((-1j * params.omega_q / params.v_g - 0.5 * g) * x)
    )
    right = (c2m * np.exp(1j * k2 * x) + c1m * np.exp(1j * k1 * x) + bound) / (c1p * c2p)
    if np.any(x == 0):
        right0 = (c2m + c1m + 1j * g * _bound_factor(params, k1, k2)) / (c1p * c2p)
        left0 = 1.0 / c2p + 1.0 / c1p
        mid = 0.5 * (left0 + right0)
    else:
        mid = 0.0
    out = pre * np.where(x < 0, left, np.where(x > 0, right, mid))
    return out if out.ndim else complex(out)


def _phi_ordered(params, x1, x2, k1, k2, bound_term):
    """phi for x1 <= x2 (region boundaries use the two-sided mean)."""
    g = params.gamma / params.v_g
    t1 = cpm(params, k1, "-") / cpm(params, k1, "+")
    t2 = cpm(params, k2, "-") / cpm(params, k2, "+")
    a = np.exp(1j * (k1 * x1 + k2 * x2))
    b = np.exp(1j * (k1 * x2 + k2 * x1))
    r1 = a + b
    r2 = t2 * a + t1 * b
    r3 = t1 * t2 * (a + b)
    if bound_term:
        E = params.v_g * (k1 + k2)
        w = params.omega_q
        r3 = r3 + (
            g ** 2 / (cpm(params, k1, "+") * cpm(params, k2, "+"))
            * _bound_factor(params, k1, k2)
            * np.exp(1j * w * x1 / params.v_g)
            * np.exp(1j * (E - w) * x2 / params.v_g)
            * np.exp(-0.5 * g * np.abs(x2 - x1))
        )
    # weights of the three regions; boundaries get half of each side
    def step(u):
        return np.where(u > 0, 1.0, np.where(u < 0, 0.0, 0.5))

    h1, h2 = step(x1), step(x2)
    w1 = (1 - h1) * (1 - h2)
    w2 = (1 - h1) * h2
    w3 = h1 * h2
    return w1 * r1 + w2 * r2 + w3 * r3


def eigen_phi(params: PhysicalParams, x1, x2, k1, k2, bound_term: bool = True):
    """Two-photon part phi(x1, x2) of eps5, symmetric under x1 <-> x2.

    bound_term=False drops the exponentially correlated piece; it exists
    only as a negative control for the jump-condition suite."""
    x1, x2, k1, k2 = np.broadcast_arrays(
        np.asarray(x1, float), np.asarray(x2, float), np.asarray(k1, float), np.asarray(k2, float)
    )
    lo, hi = np.minimum(x1, x2), np.maximum(x1, x2)
    out = _phi_ordered(params, lo, hi, k1, k2, bound_term)
    return out if out.ndim else complex(out)


def _fd(f, x, h):
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


def _rel(lhs, rhs):
    return float(np.max(np.abs(lhs - rhs) / (np.abs(lhs) + np.abs(rhs) + 1e-300)))


def jump_residuals(params: PhysicalParams, k1, k2, x, bound_term=True, h=None):
    """Relative residuals of the five stationary relations for eps5.

    Returns a dict keyed by relation name.  x (nonzero) is the spectator
    coordinate; the free-region relation is probed at (x, x + 1/2) and
    (-|x|, |x|) style points, derivatives by fourth-order differences."""
    p = params
    vg, V = p.v_g, p.V
    E = vg * (k1 + k2)
    if h is None:
        h = 1e-3 / max(abs(k1), abs(k2), 1.0)

    def phi(a, b):
        return eigen_phi(p, a, b, k1, k2, bound_term)

    eps = 1e-300
    out = {}
    beta = eigen_beta(p, k1, k2)
    a0 = eigen_alpha(p, 0.0, k1, k2)
    out["beta_alpha0"] = _rel((E - 2 * p.omega_q) * beta, V * a0)
    # phi jump at x1 = 0 with spectator x
    plus, minus = phi(eps, x), phi(-eps, x)
    out["phi_jump"] = _rel(1j * vg * (plus - minus), 0.5 * V * eigen_alpha(p, x, k1, k2))
    # free propagation away from the axes (diagonal direction)
    pts = [(x - 0.3, x + 0.4), (-abs(x) - 0.2, abs(x) + 0.1), (abs(x) + 0.1, abs(x) + 0.9)]
    res = []
    for a, b in pts:
        der = _fd(lambda u: phi(a + u, b + u), 0.0, h)
        res.append(_rel(E * phi(a, b), -1j * vg * der))
    out["free_region"] = max(res)
    a_p, a_m = eigen_alpha(p, eps, k1, k2), eigen_alpha(p, -eps, k1, k2)
    out["alpha_jump"] = _rel(1j * vg * (a_p - a_m), V * beta)
    g = p.gamma
    dp = _fd(lambda u: phi(eps, x + u), 0.0, h)
    dm = _fd(lambda u: phi(-eps, x + u), 0.0, h)
    lhs = (E - p.omega_q + 0.5j * g) * plus + 1j * vg * dp
    rhs = (E - p.omega_q - 0.5j * g) * minus + 1j * vg * dm
    out["edge_derivative"] = _rel(lhs, rhs)
    return out


# ------------------------------------------------------- initial states


@dataclass(frozen=True)
class TwoPhotonInitial:
    """A rightward and a leftward photon, qubits in |gg>."""

    right: WavepacketSpec
    left: WavepacketSpec

    def __post_init__(self):
        if self.right.direction is not Direction.RIGHTWARD:
            raise ConfigError("first photon must be rightward")
        if self.left.direction is not Direction.LEFTWARD:
            raise ConfigError("second photon must be leftward")


@dataclass(frozen=True)
class DetectionInitial:
    """A rightward photon times (sigma1^+ + xi sigma2^+)|0>/sqrt(1+|xi|^2)."""

    photon: WavepacketSpec
    xi: complex = 0.0

    def __post_init__(self):
        if self.photon.direction is not Direction.RIGHTWARD:
            raise ConfigError("probe photon must be rightward")
        if not np.isfinite(abs(complex(self.xi))):
            raise ConfigError("xi must be finite")


@dataclass
class SectorPulses:
    """Closed-form content of a two-excitation state, sector by sector.

    even_even: (kappa, X, Y) meaning kappa/2 * X_e^+ Y_e^+ |0>
    even_odd:  list of (c, E, O) meaning c * E_e^+ O_o^+ |0>
    odd_odd:   list of (c, X, Y) meaning c * X_o^+ Y_o^+ |0>
    minus_even / minus_odd: list of (c, M) meaning c * M^+ |->
    A virtual pulse in the even slot stands for an excited even qubit."""

    even_even: tuple = None
    even_odd: list = field(default_factory=list)
    odd_odd: list = field(default_factory=list)
    minus_even: list = field(default_factory=list)
    minus_odd: list = field(default_factory=list)

    def all_pulses(self):
        out = []
        if self.even_even:
            out += [self.even_even[1], self.even_even[2]]
        for _, a, b in self.even_odd + self.odd_odd:
            out += [a, b]
        for _, m in self.minus_even + self.minus_odd:
            out.append(m)
        return out


def sector_pulses(params: PhysicalParams, initial) -> SectorPulses:
    if isinstance(initial, TwoPhotonInitial):
        sr_e, sr_o = even_odd_signs(initial.right)
        sl_e, sl_o = even_odd_signs(initial.left)
        P = pulse_from_spec(params, initial.right)
        Q = pulse_from_spec(params, initial.left)
        # (P_e + P_o)(Q_e - Q_o)/2
        def sc(pulse, c):
            return ExpPulse(pulse.coef * c, pulse.rate, pulse.lo, pulse.hi, pulse.ref)

        return SectorPulses(
            even_even=(2.0 * sr_e * sl_e, P, Q),
            even_odd=[(sr_o * sl_e, Q, P), (sr_e * sl_o, P, Q)],
            odd_odd=[(sr_o * sl_o, P, Q)],
        )
    if isinstance(initial, DetectionInitial):
        xi = complex(initial.xi)
        n = math.sqrt(1.0 + abs(xi) ** 2)
        P = pulse_from_spec(params, initial.photon)
        R = virtual_pulse(params)
        ce, cm = (1 + xi) / (2 * n), (1 - xi) / (2 * n)
        out = SectorPulses(
            even_even=(2.0 * ce, P, R) if ce != 0 else None,
            even_odd=[(ce, R, P)] if ce != 0 else [],
        )
        if cm != 0:
            out.minus_even = [(cm, P)]
            out.minus_odd = [(cm, P)]
        return out
    raise ConfigError(f"unsupported initial state {type(initial).__name__}")


# ---------------------------------------------------------- grid state

GRID_SCALE = 8.0


@dataclass(frozen=True)
class KGrid2:
    """1D nodes/weights used as a tensor product for (k1, k2)."""

    nodes: np.ndarray
    weights: np.ndarray
    window: tuple

    @classmethod
    def tan_mapped(cls, center, scale, n=512):
        g = KGrid.tan_mapped(center, scale, n)
        return cls(g.nodes, g.weights, g.window)

    @classmethod
    def uniform(cls, center, half_width, n=2048):
        """Midpoint grid; needed when amplitudes are evaluated far from
        x = 0, where the sparse tails of the tan grid alias e^{ikx}."""
        g = KGrid.uniform(center, half_width, n)
        return cls(g.nodes, g.weights, g.window)


@dataclass
class SpectralStateN2:
    """Eigenbasis coefficients of a two-excitation state.

    f5, f1, f4 are (n, n) arrays over (k1, k2); f2, f3 over k.  `sectors`
    keeps the closed-form description for the residue route."""

    kgrid: KGrid2
    f5: np.ndarray
    f1: np.ndarray
    f4: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    params: PhysicalParams = None
    sectors: SectorPulses = None
    initial: object = None

    def norm(self):
        w = self.kgrid.weights
        ww = np.outer(w, w)
        two = np.sum(ww * (np.abs(self.f5) ** 2 + np.abs(self.f4) ** 2 + 8 * np.abs(self.f1) ** 2))
        one = np.sum(w * (np.abs(self.f2) ** 2 + np.abs(self.f3) ** 2))
        return float(two / (32 * math.pi ** 2) + one / (2 * math.pi))

    def minus_weight(self):
        """Population of |-> read off the eps2/eps3 coefficients."""
        w = self.kgrid.weights
        return float(np.sum(w * (np.abs(self.f2) ** 2 + np.abs(self.f3) ** 2)) / (2 * math.pi))


def _spec(params, pulse, k):
    return pulse_spectrum(pulse, k - params.omega_q / params.v_g, params.v_g)


def _ket_overlap_eps5(params, kappa, X, Y, k1, k2):
    """<eps5(k1,k2)| kappa/2 X_e Y_e>.  A virtual pulse is projected through
    the alpha component of eps5 (x < 0 branch) rather than through its
    spectrum, so the two routes stay independent."""
    if Y.is_virtual or X.is_virtual:
        P = Y if X.is_virtual else X
        # <eps5| c * P_e sigma_e^+ |0> = c * int conj(alpha(x)) p(x) dx,
        # alpha(x<0) = 2 sqrt(g/v_g) (e^{ik1x}/c2^+ + e^{ik2x}/c1^+), c = kappa/2
        g = math.sqrt(params.gamma / params.v_g)
        p1, p2 = _spec(params, P, k1), _spec(params, P, k2)
        c1m, c2m = cpm(params, k1, "-"), cpm(params, k2, "-")
        return 0.5 * kappa * 2.0 * g * (p1 / c2m + p2 / c1m)
    x1, x2 = _spec(params, X, k1), _spec(params, X, k2)
    y1, y2 = _spec(params, Y, k1), _spec(params, Y, k2)
    return kappa * (x1 * y2 + x2 * y1)


def n2_project(params: PhysicalParams, initial, kgrid2: KGrid2 = None, n: int = 512,
               tol: float = 1e-6) -> SpectralStateN2:
    """Eigenbasis coefficients of a two-photon or photon+qubit state."""
    sec = sector_pulses(params, initial)
    if kgrid2 is None:
        if isinstance(initial, TwoPhotonInitial):
            specs = [initial.right, initial.left]
        else:
            specs = [initial.photon]
        center = np.mean([s.omega for s in specs]) / params.v_g
        # a scale of several widths puts enough nodes where e^{-iEt}
        # oscillates at t ~ 1/gamma while the tan map still holds the tails
        scale = GRID_SCALE * max([s.mu for s in specs] + [0.5 * params.gamma]) / params.v_g
        kgrid2 = KGrid2.tan_mapped(center, scale, n)
    k = kgrid2.nodes
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    f5 = np.zeros(K1.shape, complex)
    f1 = np.zeros(K1.shape, complex)
    f4 = np.zeros(K1.shape, complex)
    f2 = np.zeros(k.shape, complex)
    f3 = np.zeros(k.shape, complex)
    if sec.even_even:
        kappa, X, Y = sec.even_even
        f5 = _ket_overlap_eps5(params, kappa, X, Y, K1, K2)
    for c, E, O in sec.even_odd:
        f1 = f1 + c * np.outer(_spec(params, E, k), _spec(params, O, k))
    for c, X, Y in sec.odd_odd:
        x, y = _spec(params, X, k), _spec(params, Y, k)
        # c X_o Y_o is kappa/2 X_o Y_o with kappa = 2c
        f4 = f4 + 2.0 * c * (np.outer(x, y) + np.outer(y, x))
    for c, M in sec.minus_even:
        f2 = f2 + c * _spec(params, M, k)
    for c, M in sec.minus_odd:
        f3 = f3 + c * _spec(params, M, k)
    state = SpectralStateN2(kgrid2, f5, f1, f4, f2, f3, params, sec, initial)
    captured = state.norm()
    if captured < 1.0 - tol:
        raise GridCoverageError(f"momentum grid captures only {captured:.9f} of the norm")
    return state


def n2_beta_quadrature(params: PhysicalParams, state: SpectralStateN2, t):
    """Doubly-excited amplitude (rotating frame) summed over the k grid."""
    k = state.kgrid.nodes
    w = state.kgrid.weights
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    b = eigen_beta(params, K1, K2) * state.f5 * np.outer(w, w)
    d = params.v_g * k - params.omega_q
    out = []
    for tt in np.atleast_1d(t):
        ph = np.exp(-1j * d * tt)
        out.append(ph @ b @ ph)
    return np.array(out) / (32 * math.pi ** 2)


def n2_alpha_quadrature(params: PhysicalParams, state: SpectralStateN2, t, x):
    """Even photon + superradiant amplitude alpha_t(x) from the eps5 sum
    (rotating frame; x < 0 incoming, x > 0 outgoing)."""
    k = state.kgrid.nodes
    w = state.kgrid.weights
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    d = params.v_g * k - params.omega_q
    ph = np.exp(-1j * d * t)
    base = state.f5 * np.outer(w * ph, w * ph)
    out = []
    for xx in np.atleast_1d(x):
        a = eigen_alpha(params, xx, K1, K2) * np.exp(-1j * params.omega_q * xx / params.v_g)
        out.append(np.sum(a * base))
    return np.array(out) / (32 * math.pi ** 2)


def n2_phi_quadrature(params: PhysicalParams, state: SpectralStateN2, x1, x2, t: float = 0.0):
    """Even-even two-photon amplitude Phi(x1, x2) at time t summed over the
    eps5 grid (rotating frame, engine normalization; x < 0 incoming)."""
    k = state.kgrid.nodes
    w = state.kgrid.weights
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    d = params.v_g * k - params.omega_q
    ph = np.exp(-1j * d * t)
    base = state.f5 * np.outer(w * ph, w * ph)
    out = []
    for a, b in zip(np.atleast_1d(x1), np.atleast_1d(x2)):
        val = np.sum(eigen_phi(params, a, b, K1, K2) * base)
        out.append(val * np.exp(-1j * params.omega_q * (a + b) / params.v_g))
    # phi carries both orderings, Phi = 2 <x1 x2|psi>
    return np.array(out) / (16 * math.pi ** 2)


def n2_t0_identity(params: PhysicalParams, state: SpectralStateN2, t0: float = 0.0):
    """Absolute differences between grid-route and direct values at t0.

    The direct side uses the closed-form initial state: norm 1, rho_minus
    from the dark-state pulses and beta(t0) from the residue engine."""
    eng = TwoExcitationEngine(params, state.sectors, max(t0, 0.0) + 1.0)
    b_grid = complex(n2_beta_quadrature(params, state, [t0])[0])
    b_dir = complex(eng.beta(t0))
    return {
        "norm": abs(state.norm() - 1.0),
        "rho_minus": abs(state.minus_weight() - eng._minus_norm),
        "rho_beta": abs(abs(b_grid) ** 2 - abs(b_dir) ** 2),
    }


# ------------------------------------------------------ residue engine


class TwoExcitationEngine:
    """Time-domain form of the eigenstate expansion.

    For the even-even sector (kappa/2) X_e Y_e the residues give, with
    a_X the N=1 qubit response and X_out = X - i sqrt(g) a_X,

      beta(t)       = -i sqrt(g) int^t e^{-g(t-u)/2} (kappa/2)(a_X Y + a_Y X)(u) du
      A(t, s > t)   = (kappa/2)(a_X(t) Y(s) + a_Y(t) X(s))
      A(t, s < t)   = (kappa/2)(Y_out(s) a_X(t) + X_out(s) a_Y(t))
                      - i sqrt(g) e^{-g(t-s)/2} D(s)
      Phi(s1>s2, both out) = (kappa/2)(X_out Y_out + Y_out X_out)
                      - g e^{-g(s1-s2)/2} D(s2)
      D(s) = beta(s) - kappa a_X(s) a_Y(s)

    The last term of Phi is the two-photon bound state."""

    def __init__(self, params: PhysicalParams, sectors: SectorPulses, t_max: float,
                 bound_term: bool = True):
        self.p = params
        self.g = params.gamma
        self.sg = math.sqrt(params.gamma)
        self.sec = sectors
        self.bound = bound_term
        pulses = [q for q in sectors.all_pulses()]
        rates = [abs(q.rate) for q in pulses if abs(q.rate) > 0]
        if self.g > 0:
            rates.append(0.5 * self.g)
        self.r_fast = max(rates) if rates else 1.0
        self.r_slow = min(rates) if rates else 1.0
        self.breaks = sorted({b for q in pulses for b in q.breakpoints()})
        self.s_lo = min(q.out_lo for q in pulses) if pulses else 0.0
        self.t_max = float(max(t_max, self.s_lo))
        self.edges = time_panels(self.breaks + [self.s_lo], self.t_max + 1e-9, self.r_fast, self.r_slow)
        self._conv = None
        if sectors.even_even is not None and self.g > 0:
            kappa, X, Y = sectors.even_even
            self.kappa, self.X, self.Y = kappa, X, Y
            g = self.g

            def source(u):
                return X.response(u, g) * Y.amp(u) + Y.response(u, g) * X.amp(u)

            start = max(X.lo, Y.lo)
            e = self.edges[self.edges >= start]
            if e.size == 0 or e[0] > start:
                e = np.concatenate([[start], e])
            self._conv = CausalConvolution(source, 0.5 * g, e)
        elif sectors.even_even is not None:
            self.kappa, self.X, self.Y = sectors.even_even
        # even-odd sector bookkeeping
        eo = sectors.even_odd
        self._eo_odd_gram = overlap_matrix([o for _, _, o in eo]) if eo else None
        # dark-state photon content (static)
        me = sectors.minus_even
        mo = sectors.minus_odd
        self._minus_norm = 0.0
        for lst in (me, mo):
            for c1, m1 in lst:
                for c2, m2 in lst:
                    self._minus_norm += (np.conj(c1) * c2 * m1.overlap(m2)).real

    # -- even-even pieces
    def beta(self, t):
        t = np.asarray(t, dtype=float)
        if self._conv is None:
            return np.zeros(t.shape, complex)
        return -1j * self.sg * 0.5 * self.kappa * self._conv(t)

    def D(self, s):
        a = self.X.response(s, self.g) * self.Y.response(s, self.g)
        return self.beta(s) - self.kappa * a

    def A_in(self, t, s):
        X, Y, g = self.X, self.Y, self.g
        return 0.5 * self.kappa * (X.response(t, g) * Y.amp(s) + Y.response(t, g) * X.amp(s))

    def A_out(self, t, s):
        X, Y, g = self.X, self.Y, self.g
        lin = 0.5 * self.kappa * (Y.out(s, g) * X.response(t, g) + X.out(s, g) * Y.response(t, g))
        if not self.bound:
            return lin
        return lin - 1j * self.sg * np.exp(-0.5 * g * (t - s)) * self.D(s)

    def A(self, t, s):
        s = np.asarray(s, float)
        return np.where(s > t, self.A_in(t, s), self.A_out(t, np.minimum(s, t)))

    def phi_ee_out(self, s1, s2):
        """Even-even two-photon amplitude with both photons out, any order."""
        X, Y, g = self.X, self.Y, self.g
        hi, lo = np.maximum(s1, s2), np.minimum(s1, s2)
        lin = 0.5 * self.kappa * (X.out(hi, g) * Y.out(lo, g) + Y.out(hi, g) * X.out(lo, g))
        if not self.bound:
            return lin
        return lin - g * np.exp(-0.5 * g * (hi - lo)) * self.D(lo)

    def phi_ee(self, t, s1, s2):
        """Even-even two-photon amplitude at time t (both regions)."""
        X, Y, g, k = self.X, self.Y, self.g, 0.5 * self.kappa
        s1, s2 = np.broadcast_arrays(np.asarray(s1, float), np.asarray(s2, float))
        in1, in2 = s1 > t, s2 > t
        both_in = k * (X.amp(s1) * Y.amp(s2) + Y.amp(s1) * X.amp(s2))
        mixed12 = k * (X.amp(s1) * Y.out(s2, g) + Y.amp(s1) * X.out(s2, g))
        mixed21 = k * (X.amp(s2) * Y.out(s1, g) + Y.amp(s2) * X.out(s1, g))
        out = self.phi_ee_out(np.minimum(s1, t), np.minimum(s2, t))
        return np.where(in1 & in2, both_in, np.where(in1, mixed12, np.where(in2, mixed21, out)))

    # -- nodes
    def nodes_upto(self, t):
        e = self.edges[self.edges < t]
        e = np.append(e, t) if e.size else np.array([t])
        if e.size < 2 or t <= self.s_lo:
            return np.zeros(0), np.zeros(0)
        e = e[e >= self.s_lo]
        if e[0] > self.s_lo:
            e = np.concatenate([[self.s_lo], e])
        return panel_nodes(e)

    # -- populations
    def populations(self, t) -> QubitBasisPopulations:
        g = self.g
        rho_b = 0.0
        rho_p = 0.0
        coh = 0.0j
        s, w = self.nodes_upto(t)
        sec = self.sec
        me = sec.minus_even
        if sec.even_even is not None:
            X, Y = self.X, self.Y
            ax, ay = complex(X.response(t, g)), complex(Y.response(t, g))
            k = 0.5 * self.kappa
            # incoming part, closed form over [t, inf)
            yy, xx, yx = Y.norm2(lo=t), X.norm2(lo=t), Y.overlap(X, lo=t)
            rho_p += abs(k) ** 2 * (
                abs(ax) ** 2 * yy + abs(ay) ** 2 * xx + 2 * (np.conj(ax) * ay * yx).real
            )
            if s.size:
                ao = self.A_out(t, s)
                rho_p += float(np.sum(w * np.abs(ao) ** 2))
                for c, m in me:
                    coh += np.sum(w * ao * np.conj(c * m.amp(s)))
            for c, m in me:
                coh += np.conj(c) * k * (ax * m.overlap(Y, lo=t) + ay * m.overlap(X, lo=t))
            rho_b = abs(complex(self.beta(t))) ** 2
        eo = sec.even_odd
        if eo:
            amp = np.array([c * complex(E.response(t, g)) for c, E, _ in eo])
            rho_p += float((np.conj(amp) @ self._eo_odd_gram @ amp).real)
            for c2, m in sec.minus_odd:
                coh += np.conj(c2) * sum(a * m.overlap(O) for a, (_, _, O) in zip(amp, eo))
        rho_m = self._minus_norm
        rho_gs = 1.0 - rho_p - rho_b - rho_m
        return QubitBasisPopulations(rho_gs, rho_p, rho_m, rho_b, complex(coh))

    def photon_norm(self, t):
        """Direct norm of the two-photon (|gg>) sector at time t, computed
        from the photon amplitudes rather than as a remainder."""
        g = self.g
        tot = 0.0
        sec = self.sec
        s, w = self.nodes_upto(t)
        if sec.even_even is not None:
            X, Y, k = self.X, self.Y, 0.5 * self.kappa
            # both incoming: (1/2) int int |Phi|^2 over s1, s2 > t
            xx, yy, xy = X.norm2(lo=t), Y.norm2(lo=t), X.overlap(Y, lo=t)
            tot += abs(k) ** 2 * (xx * yy + abs(xy) ** 2)
            if s.size:
                xo, yo = X.out(s, g), Y.out(s, g)
                # one in, one out
                m = np.array([
                    [np.sum(w * np.conj(a) * b) for b in (yo, xo)] for a in (yo, xo)
                ])
                inn = np.array([[X.norm2(lo=t), X.overlap(Y, lo=t)],
                                [Y.overlap(X, lo=t), Y.norm2(lo=t)]])
                # |k (X_in Y_out + Y_in X_out)|^2 integrated
                tot += abs(k) ** 2 * (
                    inn[0, 0] * m[0, 0] + inn[1, 1] * m[1, 1] + 2 * (inn[0, 1] * m[0, 1]).real
                ).real
                tot += self._out_out_norm(s, w)
        eo = sec.even_odd
        if eo:
            n = len(eo)
            ein = np.zeros((n, n), complex)
            for i, (ci, Ei, _) in enumerate(eo):
                for j, (cj, Ej, _) in enumerate(eo):
                    # a virtual pulse has no incoming part left once t >= 0
                    ein[i, j] = Ei.overlap(Ej, lo=t)
                    if s.size:
                        ein[i, j] += np.sum(w * np.conj(Ei.out(s, g)) * Ej.out(s, g))
            c = np.array([ci for ci, _, _ in eo])
            tot += float((np.conj(c) @ (ein * self._eo_odd_gram) @ c).real)
        for c1, X1, Y1 in sec.odd_odd:
            for c2, X2, Y2 in sec.odd_odd:
                tot += (np.conj(c1) * c2 * (X1.overlap(X2) * Y1.overlap(Y2) + X1.overlap(Y2) * Y1.overlap(X2))).real
        return tot

    def _out_out_norm(self, s, w):
        """(1/2) int int |Phi_out|^2 over the triangle s2 < s1 < t, times 2."""
        return float(np.sum(triangle_integrate(lambda a, b: np.abs(self.phi_ee_out(a, b)) ** 2, s, w)))

    # -- scattering output
    def outgoing_amplitudes(self, s1, s2):
        """Phi_ee, Phi_eo(s1 even, s2 odd), Phi_eo(s2 even, s1 odd), Phi_oo
        for both photons out (t -> infinity)."""
        g = self.g
        zero = np.zeros(np.broadcast(s1, s2).shape, complex)
        ee = self.phi_ee_out(s1, s2) if self.sec.even_even is not None else zero
        eo12 = zero.copy()
        eo21 = zero.copy()
        for c, E, O in self.sec.even_odd:
            eo12 = eo12 + c * E.out(s1, g) * O.amp(s2)
            eo21 = eo21 + c * E.out(s2, g) * O.amp(s1)
        oo = zero.copy()
        for c, X, Y in self.sec.odd_odd:
            oo = oo + c * (X.amp(s1) * Y.amp(s2) + Y.amp(s1) * X.amp(s2))
        return ee, eo12, eo21, oo

    def direction_probabilities(self, T):
        """(P_RR, P_RL, P_LL) from photons that have left by time T."""
        s, w = self.nodes_upto(T)
        if s.size == 0:
            return 0.0, 0.0, 0.0

        def dens(a, b):
            ee, eo12, eo21, oo = self.outgoing_amplitudes(a, b)
            rr = 0.5 * (ee + eo12 + eo21 + oo)
            ll = 0.5 * (ee - eo12 - eo21 + oo)
            rl = 0.5 * (ee - eo12 + eo21 - oo)  # right photon at a, left at b
            lr = 0.5 * (ee + eo12 - eo21 - oo)  # right photon at b, left at a
            return np.stack([np.abs(rr) ** 2, np.abs(rl) ** 2 + np.abs(lr) ** 2, np.abs(ll) ** 2])

        tot = triangle_integrate(dens, s, w)
        return float(tot[0]), float(tot[1]), float(tot[2])


def triangle_integrate(f, s, w, chunk=2_000_000):
    """int int_{s2 < s1} f(s1, s2) using the 1D panel rule s, w.

    Off-diagonal panel pairs use the tensor rule; a diagonal panel uses a
    collapsed (Duffy) rule so the |s1 - s2| kink on the diagonal is
    integrated exactly."""
    order = 20
    npan = s.size // order
    S = s.reshape(npan, order)
    W = w.reshape(npan, order)
    acc = 0.0
    # off-diagonal: s1 in panel i, s2 in panel j < i
    s1_all, s2_all, w_all = [], [], []
    for i in range(npan):
        if i > 0:
            a2 = S[:i].ravel()
            b2 = W[:i].ravel()
            s1_all.append(np.repeat(S[i], a2.size))
            s2_all.append(np.tile(a2, order))
            w_all.append(np.repeat(W[i], a2.size) * np.tile(b2, order))
        # diagonal triangle: s2 = lo + (s1 - lo) v
        lo = _panel_lo(S[i], W[i])
        xg, wg = gauss_legendre(order)
        v = 0.5 * (xg + 1.0)
        wv = 0.5 * wg
        s1 = np.repeat(S[i], order)
        s2 = lo + (s1 - lo) * np.tile(v, order)
        s1_all.append(s1)
        s2_all.append(s2)
        w_all.append(np.repeat(W[i], order) * np.tile(wv, order) * (s1 - lo))
    s1 = np.concatenate(s1_all)
    s2 = np.concatenate(s2_all)
    ww = np.concatenate(w_all)
    for a in range(0, s1.size, chunk):
        sl = slice(a, a + chunk)
        acc = acc + np.sum(f(s1[sl], s2[sl]) * ww[sl], axis=-1)
    return acc


def _panel_lo(nodes, weights):
    """Recover the left edge of a Gauss-Legendre panel from its nodes."""
    half = weights.sum() / 2.0
    mid = nodes.mean()
    return mid - half


# --------------------------------------------------------- public entries


def _t_end_default(params, pulses_mu, t_arrival):
    rates = [params.gamma] + [2 * m for m in pulses_mu]
    return t_arrival + max(20.0 / params.gamma if params.gamma > 0 else 0, 10.0 / min(rates))


def engine_for(params, state: SpectralStateN2, t_max, bound_term=True):
    return TwoExcitationEngine(params, state.sectors, t_max, bound_term)


def n2_populations(params: PhysicalParams, spectral: SpectralStateN2, t,
                   engine: TwoExcitationEngine = None) -> QubitBasisPopulations:
    eng = engine or engine_for(params, spectral, float(t))
    return eng.populations(float(t))


def n2_concurrence_trace(params: PhysicalParams, spectral: SpectralStateN2, times,
                         bound_term: bool = True) -> ConcurrenceTrace:
    times = np.asarray(times, dtype=float)
    eng = engine_for(params, spectral, float(times.max()), bound_term)
    pops = [eng.populations(t) for t in times]
    arr = np.array([p.as_array() for p in pops])
    coh = np.array([p.coh_pm for p in pops])
    comp = 2.0 * np.sqrt(np.clip(arr[:, 3], 0, None) * np.clip(arr[:, 0], 0, None))
    conc = np.array([concurrence_from_pops(p) for p in pops])
    return ConcurrenceTrace(
        times=times, rho_gs=arr[:, 0], rho_plus=arr[:, 1], rho_minus=arr[:, 2],
        rho_beta=arr[:, 3], coh_pm=coh, concurrence=conc, competitor=comp,
        meta={"engine": "analytic", "excitations": 2},
    )


def _arrival_and_mus(initial):
    if isinstance(initial, TwoPhotonInitial):
        specs = [initial.right, initial.left]
    else:
        specs = [initial.photon]
    return specs


def two_photon_rr_probability(params: PhysicalParams, spectral: SpectralStateN2,
                              T_end: float = None, tol: float = 1e-3, full: bool = False):
    """Probability that both photons end up right-moving.

    Computed from the outgoing two-photon amplitudes with the right/left
    fields rebuilt from the even/odd ones.  The result is compared with
    the value at 2*T_end; a difference above tol raises ConvergenceError.
    full=True returns (P_RR, P_RL, P_LL)."""
    specs = _arrival_and_mus(spectral.initial)
    t_arr = max(s.front / params.v_g for s in specs)
    if T_end is None:
        T_end = _t_end_default(params, [s.mu for s in specs], t_arr)
    eng = engine_for(params, spectral, 2.0 * T_end)
    p1 = eng.direction_probabilities(T_end)
    p2 = eng.direction_probabilities(2.0 * T_end)
    if abs(p1[0] - p2[0]) > tol:
        raise ConvergenceError(f"P_RR not converged: {p1[0]!r} vs {p2[0]!r}")
    return p2 if full else p2[0]


@dataclass(frozen=True)
class DetectionRow:
    xi: complex
    p_rr: float
    ratio: float
    bound: float
    concurrence: float


def detection_ratio(params: PhysicalParams, xi_list, photon: WavepacketSpec,
                    T_end: float = None, floor: float = 1e-12):
    """P_RR(xi), |P_RR(xi)/P_RR(0) - 1| and the bound 2 Re(xi)/(1+|xi|^2)."""
    if params.gamma * photon.front / params.v_g > 1e-3 * (1 + 1e-9):
        raise ConfigError("detection needs gamma * x0 / v_g <= 1e-3")

    def prr(xi):
        st = n2_project_closed(params, DetectionInitial(photon, xi))
        return two_photon_rr_probability(params, st, T_end)

    p0 = prr(0.0)
    if p0 < floor:
        raise ConvergenceError(f"P_RR(0) = {p0!r} below numerical floor")
    rows = []
    for xi in xi_list:
        xi = complex(xi)
        p = p0 if xi == 0 else prr(xi)
        rows.append(DetectionRow(
            xi=xi, p_rr=p, ratio=abs(p / p0 - 1.0),
            bound=2.0 * xi.real / (1.0 + abs(xi) ** 2), concurrence=xi_concurrence(xi),
        ))
    return rows


def n2_project_closed(params: PhysicalParams, initial) -> SpectralStateN2:
    """State with only the closed-form sector description (no grid);
    enough for the residue engine and much cheaper than n2_project."""
    empty = np.zeros((0, 0), complex)
    return SpectralStateN2(
        KGrid2(np.zeros(0), np.zeros(0), (0.0, 0.0)), empty, empty, empty,
        np.zeros(0, complex), np.zeros(0, complex), params, sector_pulses(params, initial), initial,
    )
