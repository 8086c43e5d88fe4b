"""Domain types, wavepacket mathematics and concurrence formulas.

Internal units: hbar = 1, energies in units of the qubit frequency and
lengths in v_g / Omega when the defaults are used.  Every function accepts
general (omega_q, gamma, v_g) though.

Two-qubit basis ordering is fixed everywhere to (gg, +, -, ee) with
|+> = (|eg> + |ge>)/sqrt2 and |-> = (|eg> - |ge>)/sqrt2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

BASIS = ("gg", "+", "-", "ee")

# rows: computational |g1g2>, |g1e2>, |e1g2>, |e1e2>; columns: gg, +, -, ee
_S = 1.0 / math.sqrt(2.0)
_TO_COMPUTATIONAL = np.array(
    [
        [1, 0, 0, 0],
        [0, _S, -_S, 0],
        [0, _S, _S, 0],
        [0, 0, 0, 1],
    ],
    dtype=complex,
)
_YY = np.fliplr(np.diag([-1.0, 1.0, 1.0, -1.0])).astype(complex)


@dataclass(frozen=True)
class PhysicalParams:
    """Qubit frequency, coupling energy and group velocity.

    gamma is the linewidth of the superradiant state |+> (V**2 / v_g);
    each bare qubit has linewidth gamma/2.  gamma = 0 is accepted as the
    decoupled limit.
    """

    omega_q: float = 1.0
    gamma: float = 0.01
    v_g: float = 1.0

    def __post_init__(self):
        for name in ("omega_q", "v_g"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ConfigError(f"{name} must be positive, got {val!r}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ConfigError(f"gamma must be non-negative, got {self.gamma!r}")
        if self.gamma >= self.omega_q:
            raise ConfigError(
                f"gamma={self.gamma!r} is not weak compared to omega_q={self.omega_q!r}"
            )

    @property
    def V(self) -> float:
        return math.sqrt(self.gamma * self.v_g)

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi * self.v_g / self.omega_q


class Direction(str, enum.Enum):
    RIGHTWARD = "rightward"
    LEFTWARD = "leftward"


@dataclass(frozen=True)
class WavepacketSpec:
    """Exponential pulse with a sharp front.

    A rightward packet is psi(x; a) = sqrt(2mu/v_g) e^{mu a/v_g}
    e^{-mu|x|/v_g} e^{i omega x/v_g} theta(-x-a); a leftward one is its
    mirror image psi(-x; a).  The front offset must be non-negative,
    otherwise the |x| cusp sits inside the support and the packet is not
    normalized.
    """

    mu: float
    omega: float = 1.0
    front: float = 0.0
    direction: Direction = Direction.RIGHTWARD

    def __post_init__(self):
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise ConfigError(f"mu must be positive, got {self.mu!r}")
        if not np.isfinite(self.front) or self.front < 0:
            raise ConfigError(f"front must be >= 0, got {self.front!r}")
        if not np.isfinite(self.omega):
            raise ConfigError("omega must be finite")
        object.__setattr__(self, "direction", Direction(self.direction))

    def arrival_time(self, v_g: float = 1.0) -> float:
        return self.front / v_g


def wavepacket_amplitude(spec: WavepacketSpec, x, v_g: float = 1.0):
    """Position-space amplitude psi(x; a); theta(0) = 1 at the front."""
    x = np.asarray(x, dtype=float)
    if spec.direction is Direction.LEFTWARD:
        x = -x
    mu, a = spec.mu / v_g, spec.front
    inside = x <= -a
    # exponent mu*a - mu|x| is <= 0 on the support, so no overflow
    expo = np.where(inside, mu * a - mu * np.abs(x), -np.inf)
    out = math.sqrt(2.0 * mu) * np.exp(expo) * np.exp(1j * spec.omega * x / v_g)
    return out if out.ndim else complex(out)


def wavepacket_momentum_amplitude(spec: WavepacketSpec, k, v_g: float = 1.0):
    """Fourier amplitude int dx psi(x) e^{-ikx}, normalized so that
    int |psi~|^2 dk/2pi = 1."""
    k = np.asarray(k, dtype=float)
    if spec.direction is Direction.LEFTWARD:
        k = -k
    mu, q = spec.mu / v_g, spec.omega / v_g - k
    out = math.sqrt(2.0 * mu) * np.exp(-1j * q * spec.front) / (mu + 1j * q)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class QubitBasisPopulations:
    rho_gs: float
    rho_plus: float
    rho_minus: float
    rho_beta: float
    coh_pm: complex = 0.0

    def validate(self, tol: float = 1e-6):
        vals = np.array([self.rho_gs, self.rho_plus, self.rho_minus, self.rho_beta])
        if np.any(vals < -tol) or np.any(vals > 1 + tol):
            raise ValueError(f"population outside [0, 1]: {vals}")
        if abs(vals.sum() - 1.0) > tol:
            raise ValueError(f"populations sum to {vals.sum()!r}")
        if abs(self.coh_pm) ** 2 > self.rho_plus * self.rho_minus + tol:
            raise ValueError("coherence exceeds sqrt(rho_plus rho_minus)")
        return self

    def as_array(self):
        return np.array([self.rho_gs, self.rho_plus, self.rho_minus, self.rho_beta])


@dataclass(frozen=True)
class TwoQubitDensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError("density matrix must be 4x4")
        object.__setattr__(self, "entries", rho)

    def validate(self, herm_tol=1e-10, trace_tol=1e-12, psd_tol=1e-10):
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(rho) - 1.0) > trace_tol:
            raise ValueError(f"trace {np.trace(rho)!r} != 1")
        if np.linalg.eigvalsh(rho).min() < -psd_tol:
            raise ValueError("density matrix not positive semidefinite")
        return self

    def computational(self) -> np.ndarray:
        u = _TO_COMPUTATIONAL
        return u @ self.entries @ u.conj().T


def wootters_concurrence(rho: TwoQubitDensityMatrix, trace_tol: float = 1e-10) -> float:
    """Wootters concurrence.

    The square roots of the eigenvalues of rho rho~ are obtained as the
    singular values of sqrt(rho) (Y x Y) sqrt(rho)^*, which avoids taking
    square roots of tiny, noisy eigenvalues.
    """
    if not isinstance(rho, TwoQubitDensityMatrix):
        rho = TwoQubitDensityMatrix(rho)
    rho.validate(herm_tol=1e-9, trace_tol=trace_tol, psd_tol=1e-9)
    r = rho.computational()
    r = 0.5 * (r + r.conj().T)
    w, v = np.linalg.eigh(r)
    sq = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    lam = np.linalg.svd(sq @ _YY @ sq.conj(), compute_uv=False)
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def x_state_concurrence(pops: QubitBasisPopulations, tol: float = 1e-9) -> float:
    """C = max(0, rho_plus - 2 sqrt(rho_beta rho_gs)); only valid while the
    dark state and the +/- coherence are empty."""
    if abs(pops.rho_minus) > tol or abs(pops.coh_pm) > tol:
        raise ValueError("x_state_concurrence needs rho_minus = 0 and coh_pm = 0")
    comp = 2.0 * math.sqrt(max(pops.rho_beta, 0.0) * max(pops.rho_gs, 0.0))
    return float(min(1.0, max(0.0, pops.rho_plus - comp)))


def xi_concurrence(xi) -> float:
    """Concurrence of (sigma1^+ + xi sigma2^+)|0>/sqrt(1+|xi|^2)."""
    a = abs(complex(xi))
    if not np.isfinite(a):
        return 0.0
    if a > 1.0:  # same value, better conditioned for large |xi|
        a = 1.0 / a
    return 2.0 * a / (1.0 + a * a)


def assemble_density_matrix(pops: QubitBasisPopulations) -> TwoQubitDensityMatrix:
    rho = np.diag(pops.as_array().astype(complex))
    rho[1, 2] = pops.coh_pm
    rho[2, 1] = np.conj(pops.coh_pm)
    return TwoQubitDensityMatrix(rho).validate(trace_tol=1e-6, psd_tol=1e-8)


def concurrence_from_pops(pops: QubitBasisPopulations, tol: float = 1e-9) -> float:
    """X-state formula when it applies, general Wootters otherwise."""
    if abs(pops.rho_minus) <= tol and abs(pops.coh_pm) <= tol:
        return x_state_concurrence(pops, tol=tol)
    arr = np.clip(pops.as_array(), 0.0, None)
    arr = arr / arr.sum()
    p = QubitBasisPopulations(*arr, coh_pm=pops.coh_pm)
    return wootters_concurrence(assemble_density_matrix(p), trace_tol=1e-8)


@dataclass
class ConcurrenceTrace:
    """Time series of qubit populations and concurrence.

    All arrays share the length of `times` (internal time units)."""

    times: np.ndarray
    rho_gs: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    rho_beta: np.ndarray
    coh_pm: np.ndarray
    concurrence: np.ndarray = field(default=None)
    competitor: np.ndarray = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("times", "rho_gs", "rho_plus", "rho_minus", "rho_beta"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.coh_pm = np.asarray(self.coh_pm, dtype=complex)
        if self.competitor is None:
            self.competitor = 2.0 * np.sqrt(
                np.clip(self.rho_beta, 0, None) * np.clip(self.rho_gs, 0, None)
            )
        if self.concurrence is None:
            self.concurrence = np.array([concurrence_from_pops(p) for p in self.pops])

    @property
    def pops(self):
        return [
            QubitBasisPopulations(g, p, m, b, c)
            for g, p, m, b, c in zip(
                self.rho_gs, self.rho_plus, self.rho_minus, self.rho_beta, self.coh_pm
            )
        ]

    def total(self):
        return self.rho_gs + self.rho_plus + self.rho_minus + self.rho_beta

    def peak(self) -> float:
        return float(np.max(self.concurrence))
