"""Fixed-point maximization of the K-band periodic Lieb-Thirring functional.

For a lattice with unit cell volume 1 we maximize

    J(V) = sum_{n <= K} avg_xi eps_n(xi)_-^gamma    subject to   <V_-^p> = I^p,  p = gamma + d/2,

by iterating

    rho(x)  = avg_xi sum_{j <= K} eps_j(xi)_-^{gamma - 1} |u_{j,xi}(x)|^2
    V_next  = -a rho^{1/(p-1)},   a > 0 such that <V_next_-^p> = I^p.

J is convex in V with gradient -gamma rho, and V_next maximizes <rho V_-> on the
constraint sphere, so J never decreases along the iteration.  The discrete
operator in :mod:`ltlab.bloch` keeps this exact on the grid.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize

from . import constants
from .bloch import BlochSolver, PotentialField, riesz_mean
from .lattice import Lattice, dual_vectors, make_lattice

log = logging.getLogger(__name__)


class NoNegativeSpectrumError(RuntimeError):
    """All retained bands are nonnegative, so the density vanishes."""


class MonotonicityError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class ScfConfig:
    gamma: float
    lattice: str
    norm: float  # I
    bands: int | None = None  # K; defaults to the number of motif sites
    n_c: int = 64
    n_b: int = 32
    ecut: float | None = None
    tol: float = 1e-8
    max_iter: int = 500
    init_width: float = 0.15
    init_noise: float = 0.0
    seed: int = 0
    mixing: float = 0.0
    jobs: int = 1

    def __post_init__(self):
        lat = make_lattice(self.lattice)
        if self.bands is None:
            object.__setattr__(self, "bands", lat.default_bands)
        if not self.gamma > 1.0:
            raise ValueError(f"the fixed-point iteration needs gamma > 1, got {self.gamma}")
        if not self.norm > 0:
            raise ValueError("the constraint level I must be positive")
        if self.bands < 1:
            raise ValueError("need at least one band")
        if not 0.0 <= self.mixing < 1.0:
            raise ValueError("mixing must lie in [0, 1)")
        if self.init_width <= 0:
            raise ValueError("init_width must be positive")

    @property
    def dim(self) -> int:
        return make_lattice(self.lattice).dim

    @property
    def exponent(self) -> float:
        """p = gamma + d/2."""
        return self.gamma + 0.5 * self.dim

    def make_lattice(self) -> Lattice:
        return make_lattice(self.lattice)

    def make_solver(self) -> BlochSolver:
        return BlochSolver(self.make_lattice(), self.n_c, self.ecut)


@dataclass
class OptimizationResult:
    config: ScfConfig
    potential: PotentialField
    objective: float
    ratio_sc: float
    ratio_1bs: float
    iterations: int
    trace: list
    converged: bool
    residual: float
    negative_bands: int
    gap_above: float
    warm_start: bool = False
    seconds: float = 0.0
    error: str | None = None

    def summary(self) -> dict:
        out = {
            "config": asdict(self.config),
            "objective": self.objective,
            "ratio_sc": self.ratio_sc,
            "ratio_1bs": self.ratio_1bs,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
            "negative_bands": self.negative_bands,
            "gap_above": self.gap_above,
            "warm_start": self.warm_start,
            "mixing": self.config.mixing,
        }
        if self.error:
            out["error"] = self.error
        return out


def lp_norm(values: np.ndarray, p: float) -> float:
    return float(np.mean(np.abs(values) ** p) ** (1.0 / p))


def normalize(values: np.ndarray, norm: float, p: float) -> np.ndarray:
    """Rescale a nonpositive profile so that <V_-^p>^{1/p} = norm."""
    neg = np.maximum(-values, 0.0)
    scale = np.mean(neg**p) ** (1.0 / p)
    if not scale > 0:
        raise ValueError("cannot normalize a potential with no negative part")
    return values * (norm / scale)


def periodic_gaussians(lattice: Lattice, n_c: int, width: float, sites=None) -> np.ndarray:
    """Sum over lattice translates of exp(-|x - s|^2 / (2 width^2)) for motif sites s.

    Evaluated through its Fourier series (Poisson summation), so both narrow and
    very wide Gaussians are handled; terms below exp(-40) are dropped.
    """
    sites = lattice.motif if sites is None else sites
    d = lattice.dim
    basis = dual_vectors(lattice, 80.0 / width**2)
    g = basis.vectors
    coef = (2.0 * math.pi * width * width) ** (0.5 * d) * np.exp(-0.5 * width * width * np.einsum("ij,ij->i", g, g))
    axes = [np.arange(n_c) / n_c] * d
    frac = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    x = frac @ lattice.basis
    total = np.zeros(len(x))
    for s in sites:
        shift = np.asarray(s, dtype=float) @ lattice.basis
        total += np.cos((x - shift) @ g.T) @ coef
    return total.reshape((n_c,) * d)


def init_potential(config: ScfConfig) -> PotentialField:
    """Minus periodized Gaussians at the motif sites, normalized to the constraint."""
    lat = config.make_lattice()
    prof = periodic_gaussians(lat, config.n_c, config.init_width)
    if config.init_noise:
        rng = np.random.default_rng(config.seed)
        prof = prof * (1.0 + config.init_noise * rng.uniform(-1.0, 1.0, size=prof.shape))
    prof = np.maximum(prof, 0.0)
    return PotentialField(lat, normalize(-prof, config.norm, config.exponent))


@dataclass
class StepInfo:
    objective: float  # J of the input potential
    residual: float  # ||V_next - V||_{L^p}
    scale: float  # a_n
    negative_bands: int
    gap_above: float
    bands: object = field(repr=False, default=None)


def scf_step(v: PotentialField, config: ScfConfig, solver: BlochSolver | None = None):
    """One fixed-point update; returns (V_next, StepInfo)."""
    solver = solver or config.make_solver()
    p = config.exponent
    k = config.bands
    nb = k + 1 if k + 1 <= solver.basis.size else k
    bands = solver.bands(v, nb, config.n_b, want_vectors=True, jobs=config.jobs)
    eps = bands.energies[:, :k]
    kept = _truncate(bands, k)
    obj = riesz_mean(kept, config.gamma)
    weights = np.where(eps < 0.0, np.maximum(-eps, 0.0) ** (config.gamma - 1.0), 0.0)
    if not np.any(weights > 0):
        raise NoNegativeSpectrumError(f"no negative eigenvalue among the first {k} bands")
    rho = solver.weighted_density(kept, weights)
    shape = np.maximum(rho, 0.0) ** (1.0 / (p - 1.0))
    nxt = normalize(-shape, config.norm, p)
    if config.mixing:
        nxt = normalize((1.0 - config.mixing) * nxt + config.mixing * v.values, config.norm, p)
    scale = float(config.norm / np.mean(shape**p) ** (1.0 / p))
    gap = bands.band_gap_above(k) if nb > k else float("nan")
    info = StepInfo(
        objective=obj,
        residual=lp_norm(nxt - v.values, p),
        scale=scale,
        negative_bands=kept.negative_band_count(),
        gap_above=gap,
        bands=bands,
    )
    return PotentialField(v.lattice, nxt), info


def _truncate(bands, k):
    if bands.n_bands == k:
        return bands
    return replace(bands, energies=bands.energies[:, :k], vectors=None if bands.vectors is None else bands.vectors[:, :k])


def reference_ratios(objective: float, config: ScfConfig) -> tuple:
    p = config.exponent
    d = config.dim
    scale = config.norm**p
    lsc = constants.semiclassical_constant(config.gamma, d)
    l1 = constants.one_bound_state_constant(config.gamma, d)
    return objective / (scale * lsc), objective / (scale * l1)


def optimize_point(config: ScfConfig, initial: PotentialField | None = None, callback=None) -> OptimizationResult:
    """Iterate :func:`scf_step` until ||V_{n+1} - V_n||_{L^p} < tol or max_iter.

    Returns the best evaluated iterate, where objectives within 1e-10 (1 + |J|)
    count as equal and the later one wins.  A decrease beyond that slack raises
    :class:`MonotonicityError`.
    """
    t0 = time.perf_counter()
    solver = config.make_solver()
    v = init_potential(config) if initial is None else PotentialField(
        initial.lattice, normalize(initial.values, config.norm, config.exponent)
    )
    slack = 1e-10  # relative tolerance for "no decrease", also used to break ties
    trace = []
    best = None
    converged = False
    residual = float("inf")
    info = None
    for it in range(config.max_iter):
        nxt, info = scf_step(v, config, solver)
        j = info.objective
        if trace and j < trace[-1] - slack * (1.0 + abs(trace[-1])):
            raise MonotonicityError(
                f"objective decreased at iteration {it}: {trace[-1]!r} -> {j!r}", trace + [j]
            )
        trace.append(j)
        # ties within the same slack go to the later (better converged) iterate
        if best is None or j >= best[0] - slack * (1.0 + abs(best[0])):
            best = (j, v, info)
        residual = info.residual
        if callback is not None:
            callback(it, j, info)
        log.debug("iter %d  J=%.14e  residual=%.3e", it, j, residual)
        if residual < config.tol:
            converged = True
            break
        v = nxt
    obj, vbest, binfo = best
    ratio_sc, ratio_1bs = reference_ratios(obj, config)
    return OptimizationResult(
        config=config,
        potential=vbest,
        objective=obj,
        ratio_sc=ratio_sc,
        ratio_1bs=ratio_1bs,
        iterations=len(trace),
        trace=trace,
        converged=converged,
        residual=residual,
        negative_bands=binfo.negative_bands,
        gap_above=binfo.gap_above,
        warm_start=initial is not None,
        seconds=time.perf_counter() - t0,
    )


def sweep_I(base: ScfConfig, norms, warm_start: bool = False) -> list:
    """Independent (or warm-started) optimizations over constraint levels I.

    A failing point is recorded with ``error`` set and the sweep continues.
    """
    results = []
    prev = None
    for norm in norms:
        cfg = replace(base, norm=float(norm))
        try:
            res = optimize_point(cfg, initial=prev if warm_start else None)
            prev = res.potential
        except (NoNegativeSpectrumError, MonotonicityError, RuntimeError) as exc:
            log.warning("I=%s failed: %s", norm, exc)
            nan = float("nan")
            res = OptimizationResult(cfg, init_potential(cfg), nan, nan, nan, 0, [], False, nan, 0, nan,
                                     warm_start=warm_start and prev is not None, error=str(exc))
        results.append(res)
    return results


def max_ratio_over_I(base: ScfConfig, window: tuple, xatol: float = 0.05, warm_start: bool = False):
    """max over I in ``window`` of ratio_sc, by bounded scalar search seeded inside the window.

    Returns (best ratio, argmax I, result).
    """
    cache = {}
    state = {"prev": None}

    def neg_ratio(norm):
        key = round(float(norm), 12)
        if key not in cache:
            init = state["prev"] if warm_start else None
            res = optimize_point(replace(base, norm=float(norm)), initial=init)
            state["prev"] = res.potential
            cache[key] = res
        return -cache[key].ratio_sc

    lo, hi = window
    optimize.minimize_scalar(neg_ratio, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    key = max(cache, key=lambda kk: cache[kk].ratio_sc)
    return cache[key].ratio_sc, key, cache[key]


def critical_gamma(base: ScfConfig, gamma_bracket: tuple, window: tuple, gamma_tol: float = 1e-6,
                   xatol: float = 0.05, warm_start: bool = False, max_bisections: int = 40):
    """Bisection on g(gamma) = max_I ratio_sc(gamma, I) - 1.

    ``gamma_bracket`` must have g >= 0 at its left end and g < 0 at its right end.
    Returns (gamma*, I*).
    """
    if base.dim != 2:
        raise ValueError("critical gamma search is defined for d = 2")

    def g(gamma):
        ratio, norm, _ = max_ratio_over_I(replace(base, gamma=gamma), window, xatol, warm_start)
        return ratio - 1.0, norm

    lo, hi = gamma_bracket
    glo, ilo = g(lo)
    ghi, ihi = g(hi)
    if not (glo >= 0.0 > ghi):
        raise ValueError(f"bracket [{lo}, {hi}] does not straddle the critical exponent (g={glo:.3e}, {ghi:.3e})")
    best_i = ilo
    for _ in range(max_bisections):
        if hi - lo <= gamma_tol:
            break
        mid = 0.5 * (lo + hi)
        gm, im = g(mid)
        if gm >= 0.0:
            lo, best_i = mid, im
        else:
            hi = mid
    return 0.5 * (lo + hi), best_i
