"""Closed-form building blocks for the time-domain evaluation of the
eigenstate expansions.

Everything lives in arrival-time coordinates at the coupling point
(s = t - x/v_g for a right mover in the chiral even/odd picture) and in a
frame rotating at the qubit frequency, so a free photon amplitude X(s) is
static and an even-channel photon couples with strength sqrt(gamma).

The spectral integrals  int dk/2pi e^{-i v_g k t} (...)  of products of
pulse transforms with 1/c^+ and c^-/c^+ are meromorphic in k; closing the
contour leaves residues that are exactly the piecewise exponentials below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

INF = math.inf


def phi1(z):
    """(e^z - 1)/z with the removable point z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0, np.expm1(zs) / zs)


def int_exp(lam, lo, hi, shift=0.0):
    """int_lo^hi exp(shift + lam*u) du (arrays broadcast).

    Either limit may be infinite if the integrand decays there.  Written so
    that no intermediate exponent exceeds the final one.  Returns 0 where
    hi <= lo."""
    lam, lo, hi, shift = np.broadcast_arrays(
        np.asarray(lam, dtype=complex),
        np.asarray(lo, dtype=float),
        np.asarray(hi, dtype=float),
        np.asarray(shift, dtype=complex),
    )
    flo, fhi = np.isfinite(lo), np.isfinite(hi)
    lo_f = np.where(flo, lo, 0.0)
    hi_f = np.where(fhi, hi, 0.0)
    length = np.where(flo & fhi, hi_f - lo_f, 0.0)
    lam_safe = np.where(lam == 0, 1.0, lam)
    with np.errstate(over="ignore", invalid="ignore"):
        z = lam * length
        pos = z.real > 0
        both = np.where(
            pos,
            np.exp(shift + lam * hi_f) * length * phi1(-z),
            np.exp(shift + lam * lo_f) * length * phi1(z),
        )
        left_open = np.exp(shift + lam * hi_f) / lam_safe
        right_open = -np.exp(shift + lam * lo_f) / lam_safe
    out = np.where(flo & fhi, both, np.where(flo, right_open, left_open))
    empty = np.where(flo & fhi, hi_f <= lo_f, False)
    out = np.where(empty, 0.0, out)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class ExpPulse:
    """Amplitude coef * exp(rate*(s - ref)) for lo <= s < hi, else 0.

    Physical pulses have lo finite, hi = inf and Re(rate) < 0.  The
    'virtual' pulse that stands in for an initially excited even qubit has
    lo = -inf, hi = 0 and rate = +gamma/2.
    """

    coef: complex
    rate: complex
    lo: float
    hi: float = INF
    ref: float = None

    def __post_init__(self):
        if self.ref is None:
            object.__setattr__(self, "ref", self.lo if np.isfinite(self.lo) else self.hi)

    @property
    def is_virtual(self):
        return not np.isfinite(self.lo)

    @property
    def out_lo(self):
        """First arrival time where the transmitted field can be nonzero."""
        return self.lo if np.isfinite(self.lo) else self.hi

    def breakpoints(self):
        return [b for b in (self.lo, self.hi) if np.isfinite(b)]

    def amp(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= self.lo) & (s < self.hi)
        ss = np.where(inside, s, self.ref)
        return np.where(inside, self.coef * np.exp(self.rate * (ss - self.ref)), 0.0)

    def response(self, t, gamma):
        """Even-qubit amplitude a(t) = -i sqrt(g) int^t e^{-g(t-u)/2} X(u) du."""
        t = np.asarray(t, dtype=float)
        if gamma == 0:
            return np.zeros(t.shape, dtype=complex)
        g2 = 0.5 * gamma
        lam = self.rate + g2
        m = np.minimum(t, self.hi)
        active = t > self.lo
        m = np.where(active, m, self.lo if np.isfinite(self.lo) else 0.0)
        lo = self.lo - self.ref
        # exponent: -g2 (t - u) + rate (u - ref), u measured from ref
        shift = -g2 * (t - self.ref)
        val = int_exp(lam, lo, m - self.ref, shift)
        val = np.where(active, val, 0.0)
        return -1j * math.sqrt(gamma) * self.coef * val

    def out(self, s, gamma):
        """Field after the coupling point: X(s) - i sqrt(g) a(s)."""
        return self.amp(s) - 1j * math.sqrt(gamma) * self.response(s, gamma)

    def overlap(self, other: "ExpPulse", lo=-INF, hi=INF):
        """int_lo^hi conj(self(s)) other(s) ds, closed form."""
        a = max(lo, self.lo, other.lo)
        b = min(hi, self.hi, other.hi)
        if not b > a:
            return 0.0j
        lam = np.conj(self.rate) + other.rate
        pre = np.conj(self.coef) * other.coef
        # exp(conj(r1)(u - ref1) + r2(u - ref2)), measured from ref = ref2
        shift = np.conj(self.rate) * (other.ref - self.ref)
        return complex(pre * int_exp(lam, a - other.ref, b - other.ref, shift))

    def norm2(self, lo=-INF, hi=INF):
        return self.overlap(self, lo, hi).real


def overlap_matrix(pulses, lo=-INF, hi=INF):
    n = len(pulses)
    g = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            g[i, j] = pulses[i].overlap(pulses[j], lo, hi)
    return g


def pulse_spectrum(p: ExpPulse, k_rel, v_g=1.0):
    """int ds e^{i v_g k s} X(s) * sqrt(v_g): momentum amplitude of the
    pulse with k measured from Omega/v_g."""
    d = v_g * np.asarray(k_rel, dtype=float)
    lam = p.rate + 1j * d
    lo = p.lo - p.ref
    hi = p.hi - p.ref
    return p.coef * int_exp(lam, lo, hi, 1j * d * p.ref) * math.sqrt(v_g)


# ---------------------------------------------------------------- quadrature


@lru_cache(maxsize=16)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


GL_ORDER = 20


def time_panels(breaks, t_end, r_fast, r_slow, growth=1.5):
    """Panel edges on [min(breaks), t_end].

    Each breakpoint restarts a geometric ladder of panel lengths from
    0.5/r_fast up to a cap of 4/r_slow, so fast transients after a kink and
    slow tails are both resolved with few nodes."""
    bs = sorted({float(b) for b in breaks if np.isfinite(b) and b <= t_end})
    if not bs:
        raise ValueError("no finite breakpoint below t_end")
    if t_end > bs[-1]:
        bs.append(float(t_end))
    h0 = 0.5 / r_fast
    hmax = max(4.0 / r_slow, h0)
    edges = [bs[0]]
    for a, b in zip(bs[:-1], bs[1:]):
        x, h = a, h0
        while b - x > 1.05 * h:
            x += h
            edges.append(x)
            h = min(h * growth, hmax)
        edges.append(b)
    return np.array(edges)


def panel_nodes(edges, order=GL_ORDER):
    x, w = gauss_legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def cut_edges(edges, t):
    """Edges restricted to [edges[0], t] with t appended."""
    keep = edges[edges < t]
    if keep.size == 0:
        return np.array([t, t])
    return np.append(keep, t)


class CausalConvolution:
    """B(t) = int_{t0}^t exp(-g (t-u)) S(u) du for a vectorized source S.

    The running value is stored at panel edges; a request at arbitrary t
    adds a Gauss-Legendre integral over the last partial panel."""

    def __init__(self, source, decay, edges, order=GL_ORDER):
        self.source = source
        self.decay = decay
        self.edges = np.asarray(edges, dtype=float)
        self.order = order
        x, w = gauss_legendre(order)
        a, b = self.edges[:-1], self.edges[1:]
        half = 0.5 * (b - a)
        u = a[:, None] + half[:, None] * (x + 1.0)
        s = source(u.ravel()).reshape(u.shape)
        inc = np.sum(half[:, None] * w * np.exp(-decay * (b[:, None] - u)) * s, axis=1)
        damp = np.exp(-decay * (b - a))
        vals = np.empty(len(self.edges), dtype=complex)
        vals[0] = 0.0
        for i in range(len(inc)):
            vals[i + 1] = damp[i] * vals[i] + inc[i]
        self.values = vals

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        out = np.zeros(flat.shape, dtype=complex)
        inside = flat > self.edges[0]
        if np.any(flat[inside] > self.edges[-1] * (1 + 1e-12) + 1e-300):
            raise ValueError("convolution requested beyond its time window")
        tt = flat[inside]
        j = np.clip(np.searchsorted(self.edges, tt, side="right") - 1, 0, len(self.edges) - 1)
        e = self.edges[j]
        x, w = gauss_legendre(self.order)
        half = 0.5 * (tt - e)
        u = e[:, None] + half[:, None] * (x + 1.0)
        s = self.source(u.ravel()).reshape(u.shape)
        part = np.sum(half[:, None] * w * np.exp(-self.decay * (tt[:, None] - u)) * s, axis=1)
        out[inside] = np.exp(-self.decay * (tt - e)) * self.values[j] + part
        return out.reshape(t.shape)
