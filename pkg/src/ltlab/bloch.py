"""Plane-wave Bloch solver for H_xi = |-i grad + xi|^2 + V on the unit cell.

The potential lives on a regular cell grid.  Matrix elements are

    A[G, G'] = |G + xi|^2 delta_{G G'} + Vhat((z - z') mod N_C)

where ``Vhat`` is the discrete Fourier transform of the grid values.  This is the
Galerkin matrix of the grid quadrature of ``<e_G, V e_G'>``; its derivative with
respect to a grid value is exactly ``|u(x_j)|^2 / N_C^d``, which is what keeps the
fixed-point iteration in :mod:`ltlab.scf` monotone at the discrete level.  Bases
holding two modes that coincide on the grid are rejected.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .lattice import (
    BZGrid,
    Lattice,
    PlaneWaveBasis,
    bz_grid,
    cell_grid,
    dual_vectors,
    make_lattice,
    max_alias_free_ecut,
    reduce_to_bz,
)

log = logging.getLogger(__name__)


class GridMismatchError(ValueError):
    """Plane-wave basis and potential grid are incompatible."""


class EigensolverError(RuntimeError):
    def __init__(self, xi, cause):
        super().__init__(f"eigensolver failed at xi={np.asarray(xi).tolist()}: {cause}")
        self.xi = xi


@dataclass(frozen=True, eq=False)
class PotentialField:
    lattice: Lattice
    values: np.ndarray  # shape (N_C,) * d, index j_i <-> fractional coordinate j_i / N_C

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        d = self.lattice.dim
        if v.ndim != d or len(set(v.shape)) != 1:
            raise ValueError(f"expected a square {d}-dimensional grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential contains non-finite values")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_c(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_function(cls, lattice: Lattice, n_c: int, func: Callable[[np.ndarray], np.ndarray]):
        """Sample ``func`` (Cartesian points of shape (P, d) -> (P,)) on the cell grid."""
        grid = cell_grid(lattice, n_c)
        x = grid.frac @ lattice.basis
        return cls(lattice, np.asarray(func(x), dtype=float).reshape(grid.shape))

    @classmethod
    def constant(cls, lattice: Lattice, n_c: int, value: float):
        return cls(lattice, np.full((n_c,) * lattice.dim, float(value)))

    def __add__(self, s: float) -> "PotentialField":
        return PotentialField(self.lattice, self.values + s)

    def __sub__(self, s: float) -> "PotentialField":
        return PotentialField(self.lattice, self.values - s)

    def roll(self, shift) -> "PotentialField":
        """Translate by a whole number of grid steps per axis."""
        return PotentialField(self.lattice, np.roll(self.values, shift, axis=tuple(range(self.lattice.dim))))


def potential_fourier(v: PotentialField) -> np.ndarray:
    """Discrete Fourier coefficients in FFT index order: ``Vhat[m] = mean_j V_j e^{-2 pi i m.j/N}``."""
    return np.fft.fftn(v.values) / v.values.size


def inverse_fourier(vhat: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(vhat) * vhat.size


def default_ecut(lattice: Lattice, n_c: int) -> float:
    return max_alias_free_ecut(lattice, n_c)


def check_basis(basis: PlaneWaveBasis, n_c: int) -> None:
    if np.any(basis.span() >= n_c):
        raise GridMismatchError(
            f"plane-wave basis spans {basis.span().tolist()} modes per axis; "
            f"an N_C={n_c} grid resolves fewer than {n_c} (lower E_cut or refine the grid)"
        )


def _diff_index(basis: PlaneWaveBasis, n_c: int) -> tuple:
    dz = (basis.miller[:, None, :] - basis.miller[None, :, :]) % n_c
    return tuple(dz[..., i] for i in range(dz.shape[-1]))


def build_h_xi(vhat: np.ndarray, basis: PlaneWaveBasis, xi, diff_index=None) -> np.ndarray:
    """Assemble the Hermitian plane-wave matrix of H_xi.

    ``xi`` is a Cartesian quasimomentum; ``vhat`` comes from :func:`potential_fourier`.
    """
    n_c = vhat.shape[0]
    if vhat.ndim != basis.miller.shape[1]:
        raise GridMismatchError("potential grid and basis have different dimensions")
    if diff_index is None:
        check_basis(basis, n_c)
        diff_index = _diff_index(basis, n_c)
    h = vhat[diff_index].astype(complex)
    k = basis.vectors + np.asarray(xi, dtype=float)
    h[np.diag_indices_from(h)] += np.einsum("ij,ij->i", k, k)
    return h


@dataclass(frozen=True, eq=False)
class BandStructure:
    grid: BZGrid
    xi: np.ndarray  # Cartesian quasimomenta, folded into the Brillouin zone
    energies: np.ndarray  # (n_xi, K), ascending per row
    vectors: np.ndarray | None = None  # (n_xi, K, M) orthonormal coefficient rows
    basis: PlaneWaveBasis | None = None

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def negative_band_count(self) -> int:
        return int(np.sum(np.any(self.energies < 0, axis=0)))

    def band_gap_above(self, n: int) -> float:
        """min over xi of band n+1 minus max over xi of band n (1-based n)."""
        return float(self.energies[:, n].min() - self.energies[:, n - 1].max())


class BlochSolver:
    """Fixed basis and cell grid for repeated band-structure solves."""

    def __init__(self, lattice: Lattice, n_c: int, ecut: float | None = None):
        self.lattice = lattice
        self.n_c = n_c
        self.ecut = default_ecut(lattice, n_c) if ecut is None else float(ecut)
        self.basis = dual_vectors(lattice, self.ecut)
        check_basis(self.basis, n_c)
        self._diff = _diff_index(self.basis, n_c)
        # grid slot of every plane wave, for evaluating Bloch functions on the cell grid
        self._slot = tuple((self.basis.miller % n_c).T)

    def hamiltonian(self, v: PotentialField, xi) -> np.ndarray:
        if v.n_c != self.n_c or v.lattice.kind != self.lattice.kind:
            raise GridMismatchError("potential grid does not match the solver grid")
        return build_h_xi(potential_fourier(v), self.basis, xi, self._diff)

    def _solve_one(self, vhat, xi, k, want_vectors):
        h = build_h_xi(vhat, self.basis, xi, self._diff)
        try:
            if want_vectors:
                w, u = scipy.linalg.eigh(h, subset_by_index=[0, k - 1], driver="evr")
                return w, u.T
            w = scipy.linalg.eigh(h, subset_by_index=[0, k - 1], eigvals_only=True, driver="evr")
            return w, None
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolverError(xi, exc) from exc

    def bands(self, v: PotentialField, k: int, n_b: int, want_vectors: bool = False, jobs: int = 1) -> BandStructure:
        if v.n_c != self.n_c:
            raise GridMismatchError(f"potential has N_C={v.n_c}, solver expects {self.n_c}")
        if not 1 <= k <= self.basis.size:
            raise ValueError(f"need 1 <= K <= {self.basis.size} (basis size), got K={k}")
        grid = bz_grid(self.lattice, n_b)
        xis = reduce_to_bz(self.lattice, grid.frac)
        vhat = potential_fourier(v)

        def task(x):
            return self._solve_one(vhat, x, k, want_vectors)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(task, xis))
        else:
            results = [task(x) for x in xis]
        energies = np.array([r[0] for r in results])
        vectors = np.array([r[1] for r in results]) if want_vectors else None
        return BandStructure(grid=grid, xi=xis, energies=energies, vectors=vectors, basis=self.basis)

    def bloch_functions(self, vectors: np.ndarray) -> np.ndarray:
        """Periodic parts u(x_j) on the cell grid for coefficient rows of shape (..., M).

        Normalized so that the grid average of ``|u|^2`` is 1 for a unit coefficient vector.
        """
        lead = vectors.shape[:-1]
        flat = vectors.reshape(-1, vectors.shape[-1])
        shape = (self.n_c,) * self.lattice.dim
        out = np.zeros((flat.shape[0],) + shape, dtype=complex)
        for row, c in zip(out, flat):
            np.add.at(row, self._slot, c)
        axes = tuple(range(1, self.lattice.dim + 1))
        u = np.fft.ifftn(out, axes=axes) * float(np.prod(shape))
        return u.reshape(lead + shape)

    def weighted_density(self, bands: BandStructure, weights: np.ndarray) -> np.ndarray:
        """sum_{xi, n} w_xi * weights[xi, n] * |u_{n, xi}(x)|^2 on the cell grid."""
        if bands.vectors is None:
            raise ValueError("band structure was computed without eigenvectors")
        rho = np.zeros((self.n_c,) * self.lattice.dim)
        for i, wxi in enumerate(bands.grid.weights):
            active = weights[i] != 0
            if not np.any(active):
                continue
            u = self.bloch_functions(bands.vectors[i][active])
            rho += wxi * np.tensordot(weights[i][active], np.abs(u) ** 2, axes=1)
        return rho


def lowest_bands(
    v: PotentialField,
    k: int,
    n_b: int,
    ecut: float | None = None,
    want_vectors: bool = False,
    jobs: int = 1,
) -> BandStructure:
    """The K lowest Bloch eigenvalues of ``v`` on a Gamma-centred (N_B)^d grid."""
    return BlochSolver(v.lattice, v.n_c, ecut).bands(v, k, n_b, want_vectors, jobs)


def riesz_mean(bands: BandStructure, gamma: float) -> float:
    """Brillouin-zone average of sum_n (eps_n)_-^gamma."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    neg = np.maximum(-bands.energies, 0.0) ** gamma
    return float(bands.grid.weights @ neg.sum(axis=1))


def potential_lp_integral(v: PotentialField, p: float) -> float:
    """Riemann sum of V_-^p over the unit cell."""
    if not p > 0:
        raise ValueError("exponent must be positive")
    return float(np.mean(np.maximum(-v.values, 0.0) ** p))


# -- export -------------------------------------------------------------------

def bands_to_csv(bands: BandStructure, path) -> None:
    d = bands.xi.shape[1]
    header = ",".join([f"xi{i + 1}" for i in range(d)] + ["n", "energy"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for xi, row in zip(bands.xi, bands.energies):
            for n, e in enumerate(row, start=1):
                fh.write(",".join(f"{x:.12e}" for x in xi) + f",{n},{e:.12e}\n")


def potential_to_csv(v: PotentialField, path, absolute: bool = False) -> None:
    """Grid dump: one line per point with fractional and Cartesian coordinates."""
    grid = cell_grid(v.lattice, v.n_c)
    x = grid.frac @ v.lattice.basis
    vals = v.values.ravel()
    if absolute:
        vals = np.abs(vals)
    d = v.lattice.dim
    header = [f"s{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(d)] + ["abs_value" if absolute else "value"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for f, c, val in zip(grid.frac, x, vals):
            fh.write(",".join(f"{t:.12e}" for t in (*f, *c, val)) + "\n")


def potential_to_dict(v: PotentialField) -> dict:
    return {
        "lattice": v.lattice.kind,
        "n_c": v.n_c,
        "values": [float(f"{t:.12e}") for t in v.values.ravel()],
    }


def potential_from_dict(obj: dict) -> PotentialField:
    lat = make_lattice(obj["lattice"])
    n = int(obj["n_c"])
    return PotentialField(lat, np.asarray(obj["values"], dtype=float).reshape((n,) * lat.dim))


def potential_to_json(v: PotentialField, path) -> None:
    with open(path, "w") as fh:
        json.dump(potential_to_dict(v), fh)
