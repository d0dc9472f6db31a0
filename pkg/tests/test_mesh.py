import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eddylimit.mesh import (
    BoundarySplit,
    DomainError,
    GridValidationError,
    StateVector,
    build_grid,
    full_edge_count,
    full_face_count,
    inner_product,
)


def brute_force_edges(mask, split):
    """Enumerate retained edges by looping over geometric faces."""
    n = mask.shape

    def cell_in(c):
        return all(0 <= c[i] < n[i] for i in range(3)) and mask[c]

    faces_g1 = set()
    present_edges = set()
    for c in itertools.product(*map(range, n)):
        if not mask[c]:
            continue
        for a in range(3):
            for d in (0, 1):
                other = list(c)
                other[a] += 1 if d else -1
                if cell_in(tuple(other)):
                    continue
                node = list(c)
                node[a] += d
                on_box = node[a] in (0, n[a])
                side = "xyz"[a] + ("+" if node[a] == n[a] else "-")
                gamma2 = (on_box and side in split.gamma2_sides) or (not on_box and split.holes_gamma2)
                if not gamma2:
                    faces_g1.add((a, tuple(node)))
        # every edge of a masked cell is adjacent to Omega
        for a in range(3):
            b, cc = [x for x in range(3) if x != a]
            for db, dc in itertools.product((0, 1), repeat=2):
                p = list(c)
                p[b] += db
                p[cc] += dc
                present_edges.add((a, tuple(p)))
    deleted = set()
    for a, node in faces_g1:
        b, c = [x for x in range(3) if x != a]
        for along, across in ((b, c), (c, b)):
            for d in (0, 1):
                p = list(node)
                p[across] += d
                deleted.add((along, tuple(p)))
    return present_edges - deleted


def test_counts_2x2x2_all_gamma1():
    g = build_grid((2, 2, 2), 1.0)
    assert g.n_e == 6
    assert g.n_h == 36


def test_single_cell_has_no_interior_edges():
    assert build_grid((1, 1, 1), 1.0).n_e == 0


def test_counts_2x2x2_all_gamma2():
    g = build_grid((2, 2, 2), 1.0, None, BoundarySplit.all_gamma2())
    assert g.n_e == 54 == full_edge_count((2, 2, 2))


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_full_grid_formulas(n):
    g = build_grid((n, n, n), 0.5, None, BoundarySplit.all_gamma2())
    assert g.n_e == 3 * n * (n + 1) ** 2
    assert g.n_h == 3 * n * n * (n + 1) == full_face_count((n, n, n))
    # gamma_1 removes exactly the boundary-tangential edges
    g1 = build_grid((n, n, n), 0.5)
    assert g1.n_e == 3 * n * (n - 1) ** 2


def test_rectangular_counts():
    g = build_grid((2, 3, 4), 1.0, None, "gamma2")
    assert g.n_e == full_edge_count((2, 3, 4))
    assert g.n_h == full_face_count((2, 3, 4))


@pytest.mark.parametrize("seed", range(6))
def test_edge_deletion_matches_brute_force(seed):
    r = np.random.default_rng(seed)
    n = tuple(r.integers(2, 5, size=3))
    mask = r.random(n) < 0.7
    mask[0, 0, 0] = True
    split = BoundarySplit(frozenset(r.choice(["x-", "x+", "y-", "y+", "z-", "z+"], size=2, replace=False)),
                          bool(seed % 2))
    g = build_grid(n, 1.0, mask, split)
    got = {tuple(int(v) for v in (loc[0], *loc[1:])) for loc in g.edges.location}
    got = {(a, (i, j, k)) for a, i, j, k in got}
    assert got == brute_force_edges(mask, split)


def test_checkerboard_and_slit_masks_are_accepted():
    n = (4, 4, 4)
    checker = np.indices(n).sum(axis=0) % 2 == 0
    g = build_grid(n, 1.0, checker)
    assert g.n_h == 6 * checker.sum()
    slit = np.ones(n, dtype=bool)
    slit[2, :3, :] = False
    g2 = build_grid(n, 1.0, slit)
    assert 0 < g2.n_e < build_grid(n, 1.0).n_e + 1000


def test_every_dof_touches_the_domain():
    r = np.random.default_rng(3)
    mask = r.random((5, 4, 3)) < 0.5
    mask[2, 2, 1] = True
    g = build_grid(mask.shape, 1.0, mask, "gamma2")
    for a, i, j, k in g.faces.location:
        lo = [i, j, k]
        lo[a] -= 1
        cells = [tuple(lo), (i, j, k)]
        assert any(all(0 <= c[x] < mask.shape[x] for x in range(3)) and mask[c] for c in cells)


def test_index_map_is_bijective_and_deterministic():
    mask = np.random.default_rng(0).random((4, 5, 3)) < 0.6
    mask[1, 1, 1] = True
    g1 = build_grid(mask.shape, 1.0, mask, BoundarySplit(frozenset({"y-"})))
    g2 = build_grid(mask.shape, 1.0, mask, BoundarySplit(frozenset({"y-"})))
    for space in ("edges", "faces"):
        s1, s2 = getattr(g1, space), getattr(g2, space)
        np.testing.assert_array_equal(s1.location, s2.location)
        for idx, (a, i, j, k) in enumerate(s1.location):
            assert s1.index(a, i, j, k) == idx
        assert sorted(int(x) for lk in s1.lookup for x in lk[lk >= 0]) == list(range(s1.count))


def test_validation_errors():
    with pytest.raises(DomainError):
        build_grid((2, 2, 2), 1.0, np.zeros((2, 2, 2), bool))
    with pytest.raises(GridValidationError):
        build_grid((2, 0, 2), 1.0)
    with pytest.raises(GridValidationError):
        build_grid((2, 2, 2), -1.0)
    with pytest.raises(GridValidationError):
        build_grid((2, 2, 2), 1.0, np.ones((2, 2, 3), bool))
    with pytest.raises(GridValidationError):
        BoundarySplit(frozenset({"w+"}))
    with pytest.raises(GridValidationError):
        BoundarySplit.from_json({"gamma2": ["x-"]})


def test_inner_product_examples():
    g = build_grid((2, 2, 2), 1.0)
    ones = np.ones(g.ndof)
    assert inner_product(ones, ones, g) == 42
    assert inner_product(np.arange(g.ndof), np.zeros(g.ndof), g) == 0
    gh = build_grid((2, 2, 2), 0.5)
    assert inner_product(ones, ones, gh) == pytest.approx(5.25, rel=1e-15)
    x = StateVector(np.ones(g.n_e), np.ones(g.n_h))
    assert inner_product(x, x, g) == 42
    with pytest.raises(ValueError):
        inner_product(np.ones(3), np.ones(3), g)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 42, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 42, elements=st.floats(-1e3, 1e3)),
       st.floats(0.1, 3.0))
def test_inner_product_symmetric_positive(x, y, h):
    g = build_grid((2, 2, 2), h)
    assert inner_product(x, y, g) == pytest.approx(inner_product(y, x, g), rel=1e-12, abs=1e-9)
    assert inner_product(x, x, g) >= 0
    if np.abs(x).max() > 1e-100:
        assert inner_product(x, x, g) > 0
