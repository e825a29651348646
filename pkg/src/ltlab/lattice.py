"""Bravais lattices of unit cell volume 1, their duals, and sampling grids.

Every lattice produced here has ``|det(basis)| = 1``.  Points are expressed in
fractional coordinates of the real-space basis (cell grid) or of the dual basis
(Brillouin-zone grid); Cartesian vectors are obtained by ``frac @ basis``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

KINDS = ("line", "square", "triangular", "honeycomb")

# honeycomb sites in fractional coordinates of the triangular Bravais lattice
HONEYCOMB_MOTIF = ((1.0 / 3.0, 1.0 / 3.0), (2.0 / 3.0, 2.0 / 3.0))


@dataclass(frozen=True, eq=False)
class Lattice:
    kind: str
    dim: int
    basis: np.ndarray  # rows are the real-space basis vectors v_i
    dual: np.ndarray  # rows are b_i with b_i . v_j = 2 pi delta_ij
    motif: tuple = field(default=((0.0,),))

    @property
    def cell_volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    @property
    def bz_volume(self) -> float:
        return abs(float(np.linalg.det(self.dual)))

    @property
    def default_bands(self) -> int:
        """One band per motif site (2 for honeycomb)."""
        return len(self.motif)


def make_lattice(kind: str, d: int | None = None) -> Lattice:
    """Build the normalized lattice of the given kind.

    ``d`` may be omitted; if given it must agree with ``kind`` (``line`` is the
    only 1D lattice).
    """
    expected = {"line": 1, "square": 2, "triangular": 2, "honeycomb": 2}
    if kind not in expected:
        raise ValueError(f"unsupported lattice kind {kind!r}; choose one of {KINDS}")
    if d is not None and d != expected[kind]:
        raise ValueError(f"lattice kind {kind!r} is {expected[kind]}-dimensional, got d={d}")
    d = expected[kind]

    if kind == "line":
        basis = np.array([[1.0]])
    elif kind == "square":
        basis = np.eye(2)
    else:
        a = math.sqrt(2.0 / math.sqrt(3.0))  # a^2 sin(60 deg) = 1
        basis = a * np.array([[1.0, 0.0], [0.5, math.sqrt(3.0) / 2.0]])

    dual = TWO_PI * np.linalg.inv(basis).T
    if kind == "honeycomb":
        motif = HONEYCOMB_MOTIF
    else:
        motif = (tuple(0.0 for _ in range(d)),)
    basis.setflags(write=False)
    dual.setflags(write=False)
    return Lattice(kind=kind, dim=d, basis=basis, dual=dual, motif=motif)


@dataclass(frozen=True, eq=False)
class CellGrid:
    n: int  # points per axis
    frac: np.ndarray  # (n**d, d) fractional coordinates, row-major over axes
    weights: np.ndarray

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.frac.shape[1]


@dataclass(frozen=True, eq=False)
class BZGrid:
    n: int
    frac: np.ndarray  # fractional coordinates of the dual basis, in [0, 1)
    weights: np.ndarray

    def __len__(self) -> int:
        return self.frac.shape[0]


def _regular_frac(n: int, d: int) -> np.ndarray:
    axes = [np.arange(n) / n] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def cell_grid(lattice: Lattice, n_c: int) -> CellGrid:
    if n_c < 1:
        raise ValueError("N_C must be >= 1")
    frac = _regular_frac(n_c, lattice.dim)
    w = np.full(frac.shape[0], 1.0 / frac.shape[0])
    return CellGrid(n=n_c, frac=frac, weights=w)


def bz_grid(lattice: Lattice, n_b: int) -> BZGrid:
    """Gamma-centred uniform grid of quasimomenta."""
    if n_b < 1:
        raise ValueError("N_B must be >= 1")
    frac = _regular_frac(n_b, lattice.dim)
    w = np.full(frac.shape[0], 1.0 / frac.shape[0])
    return BZGrid(n=n_b, frac=frac, weights=w)


def reduce_to_bz(lattice: Lattice, frac: np.ndarray) -> np.ndarray:
    """Cartesian quasimomenta equivalent to ``frac``, folded into the Wigner-Seitz cell.

    Among the dual-lattice translates of each point the one of smallest norm is
    kept; ties resolve to the first candidate in a fixed order, so the result is
    deterministic.
    """
    frac = np.atleast_2d(np.asarray(frac, dtype=float))
    base = frac - np.floor(frac + 0.5)  # components in [-1/2, 1/2)
    shifts = np.array(list(itertools.product((0, -1, 1), repeat=lattice.dim)), dtype=float)
    cand = (base[:, None, :] + shifts[None, :, :]) @ lattice.dual
    norms = np.einsum("ijk,ijk->ij", cand, cand)
    best = np.argmin(norms + 1e-12 * np.arange(len(shifts))[None, :], axis=1)
    return cand[np.arange(len(frac)), best]


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    ecut: float
    miller: np.ndarray  # (M, d) integer coordinates z of G = sum_i z_i b_i
    vectors: np.ndarray  # (M, d) Cartesian G

    @property
    def size(self) -> int:
        return self.miller.shape[0]

    def span(self) -> np.ndarray:
        """Per-axis extent max(z_i) - min(z_i)."""
        return self.miller.max(axis=0) - self.miller.min(axis=0)


def dual_vectors(lattice: Lattice, ecut: float) -> PlaneWaveBasis:
    """All dual-lattice vectors with ``|G|^2 <= ecut``.

    Sorted by ``|G|^2`` and then lexicographically on the integer coordinates.
    """
    if not ecut > 0:
        raise ValueError("E_cut must be positive")
    radius = math.sqrt(ecut)
    # z_i = G . v_i / (2 pi), so |z_i| <= |G| |v_i| / (2 pi)
    bounds = [int(math.floor(radius * np.linalg.norm(v) / TWO_PI + 1e-9)) for v in lattice.basis]
    ranges = [np.arange(-m, m + 1) for m in bounds]
    mesh = np.meshgrid(*ranges, indexing="ij")
    z = np.stack([m.ravel() for m in mesh], axis=-1)
    g = z @ lattice.dual
    g2 = np.einsum("ij,ij->i", g, g)
    keep = g2 <= ecut * (1.0 + 1e-12)
    z, g, g2 = z[keep], g[keep], g2[keep]
    # |G|^2 is rounded so numerically equal shells sort lexicographically
    order = np.lexsort(tuple(z[:, i] for i in reversed(range(z.shape[1]))) + (np.round(g2, 8),))
    z = z[order]
    g = g[order]
    z.setflags(write=False)
    g.setflags(write=False)
    return PlaneWaveBasis(ecut=float(ecut), miller=z, vectors=g)


def max_alias_free_ecut(lattice: Lattice, n_c: int) -> float:
    """Largest cutoff whose basis never holds two modes aliased on an ``n_c`` grid.

    The basis must satisfy ``|z_i| <= (n_c - 1) // 2`` on every axis, which keeps
    all differences ``z - z'`` strictly inside ``(-n_c, n_c)``.
    """
    half = (n_c - 1) // 2
    if half < 1:
        raise ValueError("N_C too small for a plane-wave basis")
    # (half + 1) b_i itself violates the bound, so this radius sees a violator
    r = (half + 1) * max(np.linalg.norm(b) for b in lattice.dual)
    basis = dual_vectors(lattice, r * r)
    bad = np.any(np.abs(basis.miller) > half, axis=1)
    g2 = np.einsum("ij,ij->i", basis.vectors, basis.vectors)
    limit = g2[bad].min()
    ok = g2[(g2 < limit * (1 - 1e-10))]
    return float(ok.max())
