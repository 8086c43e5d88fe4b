"""Single-excitation dynamics in the even sector.

The even N=1 scattering state with wavevector k has photon part
e^{ikx}[theta(-x) + t_k theta(x)] and qubit amplitude e_k, normalized as
<k|k'> = 2 pi delta(k - k').  A state is stored both as coefficients on a
momentum grid and as the closed-form pulse description it came from; the
time evolution can then be evaluated either by residues (exact) or by
summing over the grid (cross-check).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridCoverageError
from .kernels import ExpPulse, gauss_legendre, pulse_spectrum
from .model import (
    ConcurrenceTrace,
    Direction,
    PhysicalParams,
    WavepacketSpec,
)


def n1_transmission(params: PhysicalParams, k):
    """Even-channel transmission c^-/c^+ (unit modulus)."""
    k = np.asarray(k, dtype=float)
    d = k - params.omega_q / params.v_g
    g = params.gamma / (2.0 * params.v_g)
    out = (d - 1j * g) / (d + 1j * g)
    return out if out.ndim else complex(out)


def n1_eigenstate_qubit_amplitude(params: PhysicalParams, k):
    """sigma_e amplitude of the even scattering state: V/(v_g k - Omega + i gamma/2)."""
    k = np.asarray(k, dtype=float)
    out = params.V / (params.v_g * k - params.omega_q + 0.5j * params.gamma)
    return out if out.ndim else complex(out)


def n1_eigenstate_photon(params: PhysicalParams, k, x):
    """Photon part of the even scattering state; x = 0 gives the two-sided mean."""
    x = np.asarray(x, dtype=float)
    t = n1_transmission(params, k)
    side = np.where(x < 0, 1.0, np.where(x > 0, t, 0.5 * (1.0 + t)))
    return np.exp(1j * k * x) * side


def n1_eigen_residual(params: PhysicalParams, k, h=1e-4, x_probe=(-3.0, 2.0)):
    """Relative residual of the stationary equations for the N=1 state.

    Checks (i) free propagation (E + i v_g d/dx) phi = 0 away from x=0 by a
    fourth-order finite difference, (ii) the jump i v_g [phi(0+) - phi(0-)]
    = V e_k and (iii) (E - Omega) e_k = V phi(0) with phi(0) the mean."""
    E = params.v_g * k
    e = n1_eigenstate_qubit_amplitude(params, k)
    res = []
    for x0 in x_probe:
        f = [n1_eigenstate_photon(params, k, x0 + j * h) for j in (-2, -1, 1, 2)]
        der = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
        val = n1_eigenstate_photon(params, k, x0)
        lhs = E * val + 1j * params.v_g * der
        res.append(abs(lhs) / (abs(E * val) + 1e-300))
    t = n1_transmission(params, k)
    jump = 1j * params.v_g * (t - 1.0)
    res.append(abs(jump - params.V * e) / (abs(jump) + abs(params.V * e) + 1e-300))
    lhs = (E - params.omega_q) * e
    rhs = params.V * 0.5 * (1.0 + t)
    # both sides vanish at resonance; the incoming amplitude is 1, so V sets the scale
    res.append(abs(lhs - rhs) / (abs(lhs) + abs(rhs) + params.V + 1e-300))
    return max(res)


# ------------------------------------------------------------------ grids


@dataclass(frozen=True)
class KGrid:
    """Momentum nodes and weights for int dk.

    `tan_mapped` places Gauss-Legendre panels in theta with
    k = center + scale*tan(theta); a Lorentzian of width `scale` becomes a
    constant in theta, so its norm is captured to machine precision even
    though the grid reaches far into the tails.  `uniform` is the plain
    midpoint rule on a finite window."""

    nodes: np.ndarray
    weights: np.ndarray
    window: tuple

    @classmethod
    def tan_mapped(cls, center, scale, n=512, panels=None):
        order = 16
        panels = panels or max(1, n // order)
        x, w = gauss_legendre(order)
        edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, panels + 1)
        a, b = edges[:-1, None], edges[1:, None]
        th = (a + 0.5 * (b - a) * (x + 1)).ravel()
        wt = (0.5 * (b - a) * w).ravel()
        nodes = center + scale * np.tan(th)
        weights = wt * scale / np.cos(th) ** 2
        return cls(nodes, weights, (float(center), math.inf))

    @classmethod
    def uniform(cls, center, half_width, n=4096):
        h = 2.0 * half_width / n
        nodes = center - half_width + h * (np.arange(n) + 0.5)
        return cls(nodes, np.full(n, h), (float(center), float(half_width)))

    def integrate(self, f, axis=-1):
        return np.sum(np.moveaxis(np.asarray(f), axis, -1) * self.weights, axis=-1)


# ------------------------------------------------------------ pulse helpers


def pulse_from_spec(params: PhysicalParams, spec: WavepacketSpec, scale=1.0) -> ExpPulse:
    """Arrival-time amplitude (rotating frame) of a wavepacket in the
    even/odd coordinate y (the mirror image for a leftward packet).

    Lab amplitude sqrt(2mu) e^{-mu(s-s_f)} e^{-i omega s} on s >= s_f; the
    frame removes e^{-i Omega s}."""
    s_f = spec.front / params.v_g
    detune = spec.omega - params.omega_q
    coef = scale * math.sqrt(2.0 * spec.mu) * np.exp(-1j * detune * s_f)
    return ExpPulse(coef, -(spec.mu + 1j * detune), s_f)


def virtual_pulse(params: PhysicalParams, scale=1.0) -> ExpPulse:
    """Incoming field that leaves the even qubit excited at t=0 and no
    photon behind; its momentum amplitude is <k|sigma_e^+|0>."""
    return ExpPulse(scale * 1j * math.sqrt(params.gamma), 0.5 * params.gamma, -math.inf, 0.0)


def even_odd_signs(spec: WavepacketSpec):
    s = 1.0 / math.sqrt(2.0)
    return (s, s) if spec.direction is Direction.RIGHTWARD else (s, -s)


# --------------------------------------------------------------- N=1 state


@dataclass
class SpectralStateN1:
    """Single-excitation state: even scattering coefficients, free odd photon
    coefficients and the dark-state amplitude, plus the pulses they came
    from (used by the residue evaluation)."""

    kgrid: KGrid
    even_coeffs: np.ndarray
    odd_photon_coeffs: np.ndarray
    odd_qubit_amp: complex
    params: PhysicalParams = None
    even_pulses: list = field(default_factory=list)
    odd_pulses: list = field(default_factory=list)

    def norm(self):
        w = self.kgrid.weights / (2 * math.pi)
        return float(
            np.sum(w * (np.abs(self.even_coeffs) ** 2 + np.abs(self.odd_photon_coeffs) ** 2))
            + abs(self.odd_qubit_amp) ** 2
        )


def _spectral_coeffs(params, pulses, k):
    k_rel = np.asarray(k) - params.omega_q / params.v_g
    out = np.zeros(np.shape(k), dtype=complex)
    for p in pulses:
        out = out + pulse_spectrum(p, k_rel, params.v_g)
    return out


def n1_project(params: PhysicalParams, photon: WavepacketSpec, kgrid: KGrid = None,
               tol: float = 1e-6) -> SpectralStateN1:
    """Project a single guided photon (qubits in |gg>) on the N=1 eigenbasis."""
    if kgrid is None:
        # several widths, so the oscillating factor e^{-iEt} stays resolved
        width = 8.0 * max(photon.mu, 0.5 * params.gamma, 1e-300) / params.v_g
        kgrid = KGrid.tan_mapped(photon.omega / params.v_g, width, 1024)
    se, so = even_odd_signs(photon)
    even = [pulse_from_spec(params, photon, se)]
    odd = [pulse_from_spec(params, photon, so)]
    state = SpectralStateN1(
        kgrid=kgrid,
        even_coeffs=_spectral_coeffs(params, even, kgrid.nodes),
        odd_photon_coeffs=_spectral_coeffs(params, odd, kgrid.nodes),
        odd_qubit_amp=0.0j,
        params=params,
        even_pulses=even,
        odd_pulses=odd,
    )
    captured = state.norm()
    if captured < 1.0 - tol:
        raise GridCoverageError(f"momentum grid captures only {captured:.9f} of the norm")
    return state


def n1_qubit_amplitude(params, state: SpectralStateN1, times, method="contour"):
    """Even-qubit amplitude (rotating frame) at the given internal times."""
    times = np.asarray(times, dtype=float)
    if method == "contour":
        out = np.zeros(times.shape, dtype=complex)
        for p in state.even_pulses:
            out = out + p.response(times, params.gamma)
        return out
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    k = state.kgrid.nodes
    e = n1_eigenstate_qubit_amplitude(params, k)
    w = state.kgrid.weights / (2 * math.pi) * e * state.even_coeffs
    detune = params.v_g * k - params.omega_q
    return np.exp(-1j * np.multiply.outer(times, detune)) @ w


def n1_evolve_trace(params: PhysicalParams, state: SpectralStateN1, times,
                    method: str = "contour") -> ConcurrenceTrace:
    """rho_plus(t) and C(t) = rho_plus(t) for a single-excitation state."""
    times = np.asarray(times, dtype=float)
    a = n1_qubit_amplitude(params, state, times, method)
    rho_p = np.abs(a) ** 2
    rho_m = np.full(times.shape, abs(state.odd_qubit_amp) ** 2)
    coh = a * np.conj(state.odd_qubit_amp)
    rho_gs = 1.0 - rho_p - rho_m
    return ConcurrenceTrace(
        times=times,
        rho_gs=rho_gs,
        rho_plus=rho_p,
        rho_minus=rho_m,
        rho_beta=np.zeros(times.shape),
        coh_pm=coh,
        concurrence=np.clip(rho_p, 0.0, 1.0),
        competitor=np.zeros(times.shape),
        meta={"engine": "analytic", "method": method, "excitations": 1},
    )


def n1_photon_norm(params, state: SpectralStateN1, t):
    """Direct photon norm at time t: incoming part plus transmitted part,
    used to check conservation independently of the qubit amplitude."""
    tot = 0.0
    for pulses in (state.odd_pulses,):
        for p in pulses:
            for q in pulses:
                tot += p.overlap(q).real
    ev = state.even_pulses
    for p in ev:
        for q in ev:
            tot += p.overlap(q, lo=t).real
    from .kernels import panel_nodes, time_panels

    lo = min(p.out_lo for p in ev) if ev else t
    if ev and t > lo:
        rates = [abs(p.rate) for p in ev] + [0.5 * params.gamma]
        rates = [r for r in rates if r > 0]
        edges = time_panels([b for p in ev for b in p.breakpoints()] + [lo, t], t,
                            max(rates), min(rates))
        s, w = panel_nodes(edges[edges <= t])
        f = sum(p.out(s, params.gamma) for p in ev)
        tot += float(np.sum(w * np.abs(f) ** 2))
    return tot


def n1_reconstruct(params, state: SpectralStateN1, x, t=0.0):
    """Position-space even and odd photon amplitudes at time t summed over
    the momentum grid (quadrature route; used for round-trip checks)."""
    x = np.asarray(x, dtype=float)
    k = state.kgrid.nodes
    w = state.kgrid.weights / (2 * math.pi)
    ph = np.exp(-1j * (params.v_g * k - params.omega_q) * t)
    modes = n1_eigenstate_photon(params, k[None, :], x[:, None])
    even = modes @ (w * ph * state.even_coeffs)
    odd = np.exp(1j * np.multiply.outer(x, k)) @ (w * ph * state.odd_photon_coeffs)
    return even, odd
