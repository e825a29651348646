"""Jacobi elliptic functions and the one-gap Lame potential.

The Lame potential ``V_k(x) = 2 k^2 sn(x|k)^2 - 1 - k^2`` has period ``2K(k)``,
spectrum ``[-1, -k^2] U [0, inf)`` and density of states

    n(E) = (E + c) / (2 pi sqrt((E + 1)(E + k^2) E)) * (-1_{(-1,-k^2)} + 1_{(0,inf)})

with ``c = k^2 <sn^2>``.  At gamma = 3/2 the Bloch-band Riesz mean equals
``(3/16) <V^2>`` for every modulus, which the closed forms below make explicit.

Singular endpoint integrals ``int_a^b f(w) dw / sqrt((w - a)(b - w))`` are always
evaluated after the substitution ``w = a + (b - a) sin^2 t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

K_MAX = 1.0 - 1e-10
_QUAD = dict(epsabs=1e-13, epsrel=1e-12, limit=200)


class BandEdgeError(ValueError):
    """Density of states evaluated exactly at a band edge (integrable singularity)."""


def _check_modulus(k: float, allow_zero: bool = True) -> float:
    k = float(k)
    if not (k >= 0.0 if allow_zero else k > 0.0) or k > K_MAX:
        lo = "0 <=" if allow_zero else "0 <"
        raise ValueError(f"modulus k={k} outside the supported range {lo} k <= 1 - 1e-10")
    return k


@lru_cache(maxsize=256)
def _agm_sequence(k: float) -> tuple:
    """Descending Landen / AGM sequences (a_n, c_n) started from (1, k', k)."""
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    a, b, c = [1.0], kp, [k]
    for _ in range(40):
        if abs(c[-1]) <= 1e-17 * a[-1]:
            break
        an, bn = a[-1], b
        a.append(0.5 * (an + bn))
        c.append(0.5 * (an - bn))
        b = math.sqrt(an * bn)
    return tuple(a), tuple(c)


def complete_elliptic_K(k: float) -> float:
    """K(k) = pi / (2 AGM(1, sqrt(1 - k^2)))."""
    k = _check_modulus(k)
    a, _ = _agm_sequence(k)
    return math.pi / (2.0 * a[-1])


def jacobi_sn(x, k: float):
    """sn(x|k) for real ``x`` (scalar or array), by descending Landen transformation."""
    k = _check_modulus(k)
    x = np.asarray(x, dtype=float)
    if k == 0.0:
        return np.sin(x) if x.ndim else float(np.sin(x))
    a, c = _agm_sequence(k)
    quarter = math.pi / (2.0 * a[-1])
    xr = x - 4.0 * quarter * np.round(x / (4.0 * quarter))
    n = len(a) - 1
    phi = (2.0**n) * a[n] * xr
    for i in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(np.clip(c[i] / a[i] * np.sin(phi), -1.0, 1.0)))
    out = np.sin(phi)
    return out if out.ndim else float(out)


def lame_potential(x, k: float):
    sn = jacobi_sn(x, k)
    return 2.0 * k * k * np.square(sn) - 1.0 - k * k


def lame_period(k: float) -> float:
    return 2.0 * complete_elliptic_K(k)


def lame_c(k: float) -> float:
    """c = k^2 / (2K) int_{-K}^{K} sn^2, by adaptive quadrature."""
    k = _check_modulus(k, allow_zero=False)
    kk = complete_elliptic_K(k)
    val, _ = integrate.quad(lambda x: jacobi_sn(x, k) ** 2, 0.0, kk, **_QUAD)
    return k * k * val / kk


def _band_edge_check(e, edges):
    e = np.asarray(e, dtype=float)
    for edge in edges:
        if np.any(e == edge):
            raise BandEdgeError(f"density of states is singular at the band edge E={edge}")
    return e


def lame_dos(energy, k: float, c: float | None = None):
    """Density of states n(E) of -d^2/dx^2 + V_k, per unit length."""
    k = _check_modulus(k, allow_zero=False)
    if c is None:
        c = lame_c(k)
    e = _band_edge_check(energy, (-1.0, -k * k, 0.0))
    out = np.zeros_like(e)
    lower = (e > -1.0) & (e < -k * k)
    upper = e > 0.0
    for mask, sign in ((lower, -1.0), (upper, 1.0)):
        em = e[mask]
        out[mask] = sign * (em + c) / (2.0 * math.pi * np.sqrt((em + 1.0) * (em + k * k) * em))
    return out if out.ndim else float(out)


def lame_riesz_mean(k: float, c: float | None = None) -> float:
    """Trace per unit length of (-d^2/dx^2 + V_k)_-^{3/2}, closed form."""
    k = _check_modulus(k, allow_zero=False)
    if c is None:
        c = lame_c(k)
    k2 = k * k
    return (3.0 + 2.0 * k2 + 3.0 * k2 * k2) / 16.0 - 0.25 * c * (1.0 + k2)


def lame_potential_mean(k: float, c: float | None = None) -> float:
    """(1/l) int over a period of V_k(x)_-^2, closed form (V_k <= 0 everywhere)."""
    k = _check_modulus(k, allow_zero=False)
    if c is None:
        c = lame_c(k)
    k2 = k * k
    return (4.0 * k2 / 3.0) * (2.0 * (1.0 + k2) * c / k2 - 1.0) - 4.0 * (1.0 + k2) * c + (1.0 + k2) ** 2


def lame_potential_mean_quadrature(k: float) -> float:
    """(1/l) int V_k^2 by direct quadrature over a half period (V_k is even)."""
    k = _check_modulus(k, allow_zero=False)
    kk = complete_elliptic_K(k)
    val, _ = integrate.quad(lambda x: lame_potential(x, k) ** 2, 0.0, kk, **_QUAD)
    return val / kk


def _lower_band_integral(f, k: float) -> float:
    """int_{-1}^{-k^2} f(E) dE / sqrt((E + 1)(-k^2 - E)) with E = -1 + (1 - k^2) sin^2 t."""
    k2 = k * k

    def g(t):
        e = -1.0 + (1.0 - k2) * math.sin(t) ** 2
        return 2.0 * f(e)

    val, _ = integrate.quad(g, 0.0, 0.5 * math.pi, **_QUAD)
    return val


def lame_riesz_mean_quadrature(k: float, gamma: float = 1.5, c: float | None = None) -> float:
    """int n(E) E_-^gamma dE by singular-endpoint quadrature over the lower band."""
    k = _check_modulus(k, allow_zero=False)
    if c is None:
        c = lame_c(k)
    # n(E) sqrt((E+1)(-k^2-E)) = -(E + c) / (2 pi sqrt(-E)) on the lower band
    return _lower_band_integral(lambda e: -(e + c) * (-e) ** (gamma - 0.5) / (2.0 * math.pi), k)


def lame_band_filling(k: float, c: float | None = None) -> float:
    """int of n(E) over the lower band (should equal 1 / (2K))."""
    k = _check_modulus(k, allow_zero=False)
    if c is None:
        c = lame_c(k)
    return _lower_band_integral(lambda e: -(e + c) / (2.0 * math.pi * math.sqrt(-e)), k)


def beta_integrals(k: float) -> tuple:
    """int_{k^2}^1 t^m dt / sqrt((1-t)(t-k^2)) for m = 1, 2 (closed forms)."""
    k = _check_modulus(k, allow_zero=False)
    k2 = k * k
    return 0.5 * math.pi * (1.0 + k2), math.pi / 8.0 * (3.0 + 2.0 * k2 + 3.0 * k2 * k2)


def beta_integrals_quadrature(k: float) -> tuple:
    k = _check_modulus(k, allow_zero=False)
    k2 = k * k
    out = []
    for m in (1, 2):
        val, _ = integrate.quad(lambda s: 2.0 * (k2 + (1.0 - k2) * math.sin(s) ** 2) ** m, 0.0, 0.5 * math.pi, **_QUAD)
        out.append(val)
    return tuple(out)


@dataclass(frozen=True)
class LameModel:
    k: float
    K: float
    period: float
    c: float
    band_edges: tuple

    @classmethod
    def from_modulus(cls, k: float) -> "LameModel":
        k = _check_modulus(k, allow_zero=False)
        kk = complete_elliptic_K(k)
        return cls(k=k, K=kk, period=2.0 * kk, c=lame_c(k), band_edges=(-1.0, -k * k, 0.0))

    def potential(self, x):
        return lame_potential(x, self.k)

    def dos(self, energy):
        return lame_dos(energy, self.k, self.c)

    def riesz_mean(self) -> float:
        return lame_riesz_mean(self.k, self.c)

    def potential_mean(self) -> float:
        return lame_potential_mean(self.k, self.c)

    def report(self) -> dict:
        rm = self.riesz_mean()
        pm = self.potential_mean()
        return {
            "k": self.k,
            "period": self.period,
            "c": self.c,
            "edge_bottom": self.band_edges[0],
            "edge_gap_low": self.band_edges[1],
            "edge_gap_high": self.band_edges[2],
            "riesz_mean": rm,
            "potential_mean": pm,
            "ratio": rm / pm,
            "deviation": rm / pm - 3.0 / 16.0,
        }


LAME_REPORT_COLUMNS = (
    "k", "period", "c", "edge_bottom", "edge_gap_low", "edge_gap_high",
    "riesz_mean", "potential_mean", "ratio", "deviation",
)


# -- Weierstrass side ---------------------------------------------------------

@dataclass(frozen=True)
class WeierstrassTriple:
    e1: float
    e2: float
    e3: float
    eta1_over_omega1: float
    omega1: float


def weierstrass_triple(k: float) -> WeierstrassTriple:
    """Roots e1 > e2 > e3 for the real period 2K(k), and eta_1 / omega_1.

    eta_1 / omega_1 solves the band-filling condition: the integrated density of
    states of W = 2 wp(x + omega_2 / 2) equals 1/omega_1 at the top of the lower band.
    """
    k = _check_modulus(k, allow_zero=False)
    s = (1.0 + k * k) / 3.0
    e1, e2, e3 = 1.0 - s, k * k - s, -s
    omega1 = 2.0 * complete_elliptic_K(k)

    def moment(m):
        def g(t):
            w = e2 + (e1 - e2) * math.sin(t) ** 2
            return 2.0 * w**m / math.sqrt(w - e3)

        return integrate.quad(g, 0.0, 0.5 * math.pi, **_QUAD)[0]

    i0, i1 = moment(0), moment(1)
    eta = (2.0 * math.pi / omega1 - i1) / i0
    return WeierstrassTriple(e1=e1, e2=e2, e3=e3, eta1_over_omega1=eta, omega1=omega1)


def weierstrass_dos(energy, k: float, triple: WeierstrassTriple | None = None):
    """Density of states of -d^2/dx^2 + W with W = V_k + (1 + k^2)/3."""
    t = triple or weierstrass_triple(k)
    e = _band_edge_check(energy, (-t.e1, -t.e2, -t.e3))
    out = np.zeros_like(e)
    lower = (e > -t.e1) & (e < -t.e2)
    upper = e > -t.e3
    el, eu = e[lower], e[upper]
    out[lower] = (-el + t.eta1_over_omega1) / (
        2.0 * math.pi * np.sqrt((t.e1 + el) * (-el - t.e2) * (-el - t.e3))
    )
    out[upper] = (eu - t.eta1_over_omega1) / (2.0 * math.pi * np.sqrt((t.e1 + eu) * (t.e2 + eu) * (t.e3 + eu)))
    return out if out.ndim else float(out)


def _integrated_dos_scalar(e: float, t: WeierstrassTriple) -> float:
    eta = t.eta1_over_omega1
    if e <= -t.e1:
        return 0.0
    if e <= -t.e2:
        # w = e1 - (e1 - e2) sin^2 s runs from e1 down to -E
        top = math.asin(math.sqrt(min(1.0, (t.e1 + e) / (t.e1 - t.e2))))

        def g(s):
            w = t.e1 - (t.e1 - t.e2) * math.sin(s) ** 2
            return 2.0 * (w + eta) / math.sqrt(w - t.e3)

        return integrate.quad(g, 0.0, top, **_QUAD)[0] / (2.0 * math.pi)
    if e <= -t.e3:
        return 1.0 / t.omega1

    # w = e3 - u^2 runs from e3 down to -E; the sign makes N_W increase
    def h(u):
        w = t.e3 - u * u
        return 2.0 * (-w - eta) / math.sqrt((t.e1 - w) * (t.e2 - w))

    return 1.0 / t.omega1 + integrate.quad(h, 0.0, math.sqrt(e + t.e3), **_QUAD)[0] / (2.0 * math.pi)


def weierstrass_integrated_dos(energy, k: float, triple: WeierstrassTriple | None = None):
    """Integrated density of states N_W(E); nondecreasing, 1/omega_1 across the gap."""
    t = triple or weierstrass_triple(k)
    e = np.asarray(energy, dtype=float)
    out = np.vectorize(lambda x: _integrated_dos_scalar(float(x), t), otypes=[float])(e)
    return out if out.ndim else float(out)


def lame_integrated_dos(energy, k: float, triple: WeierstrassTriple | None = None):
    """Integrated density of states of V_k, via the shift W = V_k + (1 + k^2)/3."""
    return weierstrass_integrated_dos(np.asarray(energy, dtype=float) + (1.0 + k * k) / 3.0, k, triple)
