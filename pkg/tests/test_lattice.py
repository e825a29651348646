import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltlab.lattice import (
    KINDS,
    bz_grid,
    cell_grid,
    dual_vectors,
    make_lattice,
    max_alias_free_ecut,
    reduce_to_bz,
)


@pytest.mark.parametrize("kind", KINDS)
def test_unit_volume_and_duality(kind):
    lat = make_lattice(kind)
    assert lat.cell_volume == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(lat.dual @ lat.basis.T, 2 * math.pi * np.eye(lat.dim), atol=1e-12)
    assert lat.bz_volume == pytest.approx((2 * math.pi) ** lat.dim, rel=1e-13)


def test_line_and_square():
    line = make_lattice("line", 1)
    np.testing.assert_allclose(line.dual, [[2 * math.pi]])
    sq = make_lattice("square", 2)
    np.testing.assert_allclose(sq.dual, 2 * math.pi * np.eye(2), atol=1e-15)


def test_triangular_geometry():
    lat = make_lattice("triangular")
    a = math.sqrt(2 / math.sqrt(3))
    np.testing.assert_allclose(np.linalg.norm(lat.basis, axis=1), [a, a], rtol=1e-14)
    cos = lat.basis[0] @ lat.basis[1] / a**2
    assert cos == pytest.approx(0.5, abs=1e-14)


def test_honeycomb_motif():
    lat = make_lattice("honeycomb")
    np.testing.assert_allclose(lat.basis, make_lattice("triangular").basis)
    assert lat.default_bands == 2
    assert make_lattice("square").default_bands == 1


@pytest.mark.parametrize("kind, d", [("line", 2), ("square", 1), ("cubic", None)])
def test_bad_kind_dimension(kind, d):
    with pytest.raises(ValueError):
        make_lattice(kind, d)


def test_dual_vectors_enumeration():
    b = dual_vectors(make_lattice("line"), (2 * math.pi * 2.5) ** 2)
    np.testing.assert_array_equal(b.miller[:, 0], [0, -1, 1, -2, 2])
    assert dual_vectors(make_lattice("square"), 1e-9).size == 1
    sq = dual_vectors(make_lattice("square"), (2 * math.pi) ** 2)
    assert sq.size == 5
    assert {tuple(z) for z in sq.miller} == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), ecut=st.floats(1.0, 3000.0))
def test_dual_vectors_symmetric_and_sorted(kind, ecut):
    b = dual_vectors(make_lattice(kind), ecut)
    zs = {tuple(z) for z in b.miller}
    assert all(tuple(-np.array(z)) in zs for z in zs)
    assert (0,) * b.miller.shape[1] in zs
    g2 = np.einsum("ij,ij->i", b.vectors, b.vectors)
    assert np.all(np.diff(np.round(g2, 8)) >= 0)
    assert np.all(g2 <= ecut * (1 + 1e-12))
    # enumeration is complete: brute force over a generous box
    lat = make_lattice(kind)
    r = int(math.sqrt(ecut) / min(np.linalg.norm(lat.dual, axis=1))) + 2
    box = np.stack(np.meshgrid(*[np.arange(-r, r + 1)] * lat.dim, indexing="ij"), -1).reshape(-1, lat.dim)
    gg = box @ lat.dual
    assert np.sum(np.einsum("ij,ij->i", gg, gg) <= ecut * (1 + 1e-12)) == b.size


def test_grids():
    g = bz_grid(make_lattice("line"), 4)
    np.testing.assert_allclose((g.frac @ make_lattice("line").dual)[:, 0], [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    np.testing.assert_allclose(g.weights, 0.25)
    c = cell_grid(make_lattice("square"), 2)
    assert c.frac.shape == (4, 2)
    np.testing.assert_allclose(c.weights, 0.25)
    for n in (1, 3, 7):
        assert bz_grid(make_lattice("triangular"), n).weights.sum() == pytest.approx(1.0)
        assert np.all(bz_grid(make_lattice("triangular"), n).frac[0] == 0)
    with pytest.raises(ValueError):
        bz_grid(make_lattice("line"), 0)
    with pytest.raises(ValueError):
        cell_grid(make_lattice("line"), 0)


def test_grids_deterministic():
    lat = make_lattice("honeycomb")
    np.testing.assert_array_equal(bz_grid(lat, 5).frac, bz_grid(lat, 5).frac)
    np.testing.assert_array_equal(dual_vectors(lat, 900.0).miller, dual_vectors(lat, 900.0).miller)


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(KINDS), frac=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_reduce_to_bz(kind, frac):
    lat = make_lattice(kind)
    f = np.array(frac[: lat.dim])
    xi = reduce_to_bz(lat, f)[0]
    # same class modulo the dual lattice
    z = np.linalg.solve(lat.dual.T, xi - f @ lat.dual)
    np.testing.assert_allclose(z, np.round(z), atol=1e-9)
    # no dual-lattice translate is shorter
    for s in np.stack(np.meshgrid(*[np.arange(-2, 3)] * lat.dim, indexing="ij"), -1).reshape(-1, lat.dim):
        assert np.linalg.norm(xi) <= np.linalg.norm(xi + s @ lat.dual) + 1e-9


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n_c", [8, 24, 33])
def test_max_alias_free_ecut(kind, n_c):
    lat = make_lattice(kind)
    e = max_alias_free_ecut(lat, n_c)
    half = (n_c - 1) // 2
    assert np.abs(dual_vectors(lat, e).miller).max() <= half
    # the next shell beyond the cutoff already holds a mode outside the bound
    wide = dual_vectors(lat, 4 * e)
    g2 = np.einsum("ij,ij->i", wide.vectors, wide.vectors)
    nxt = g2[g2 > e * (1 + 1e-10)].min()
    shell = np.abs(g2 - nxt) < 1e-8 * nxt
    assert np.abs(wide.miller[shell]).max() > half
