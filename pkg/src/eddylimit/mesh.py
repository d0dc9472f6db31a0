"""Voxel grids with Yee-type staggering.

E lives on cell edges and H on cell faces.  The electric boundary
condition on the Gamma_1 part of the boundary is imposed by dropping the
tangential edges that lie on Gamma_1 faces from the E degree-of-freedom
space.  Nothing has to be done for Gamma_2: the transpose of the
restricted curl carries the natural condition automatically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

AXES = "xyz"
SIDES = tuple(f"{a}{s}" for a in AXES for s in "-+")

# (a, b, c) cyclic: (curl v)_a = d_b v_c - d_c v_b
CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


class DomainError(ValueError):
    """The voxel mask does not describe a usable domain."""


class GridValidationError(ValueError):
    """Inconsistent grid inputs (boundary split, shapes, spacing)."""


@dataclass(frozen=True)
class BoundarySplit:
    """Assignment of boundary faces to Gamma_1 (electric) or Gamma_2.

    Faces on the named sides of the bounding box go to Gamma_2; boundary
    faces of interior holes go to Gamma_2 when ``holes_gamma2`` is set.
    Everything else is Gamma_1.
    """

    gamma2_sides: frozenset = frozenset()
    holes_gamma2: bool = False

    def __post_init__(self):
        bad = set(self.gamma2_sides) - set(SIDES)
        if bad:
            raise GridValidationError(f"unknown boundary sides {sorted(bad)}; expected a subset of {SIDES}")
        object.__setattr__(self, "gamma2_sides", frozenset(self.gamma2_sides))

    @classmethod
    def all_gamma1(cls) -> "BoundarySplit":
        return cls()

    @classmethod
    def all_gamma2(cls) -> "BoundarySplit":
        return cls(frozenset(SIDES), True)

    @classmethod
    def from_json(cls, obj) -> "BoundarySplit":
        if obj is None or obj == "gamma1":
            return cls.all_gamma1()
        if obj == "gamma2":
            return cls.all_gamma2()
        if isinstance(obj, dict):
            extra = set(obj) - {"gamma2_sides", "holes_gamma2"}
            if extra:
                raise GridValidationError(f"unknown boundary_split keys {sorted(extra)}")
            return cls(frozenset(obj.get("gamma2_sides", ())), bool(obj.get("holes_gamma2", False)))
        raise GridValidationError(f"cannot interpret boundary_split {obj!r}")

    def to_json(self):
        return {"gamma2_sides": sorted(self.gamma2_sides), "holes_gamma2": self.holes_gamma2}


@dataclass(frozen=True, eq=False)
class DofSpace:
    """Indexed set of geometric locations.

    ``location[i] = (axis, i, j, k)`` for DOF ``i``; ``lookup[axis]`` is the
    inverse map over the full index box of that axis (-1 where absent).
    """

    kind: str
    location: np.ndarray
    lookup: tuple

    @property
    def count(self) -> int:
        return int(self.location.shape[0])

    def index(self, axis: int, i: int, j: int, k: int) -> int:
        idx = int(self.lookup[axis][i, j, k])
        if idx < 0:
            raise KeyError((axis, i, j, k))
        return idx


@dataclass(frozen=True, eq=False)
class Grid:
    cells_per_axis: tuple
    spacing: float
    domain_mask: np.ndarray
    boundary_split: BoundarySplit
    edges: DofSpace
    faces: DofSpace
    # edges adjacent to Omega, before Gamma_1 deletion; used by the gradient
    edge_present: tuple = field(repr=False)
    edge_on_gamma1: tuple = field(repr=False)
    node_present: np.ndarray = field(repr=False)
    node_on_gamma1: np.ndarray = field(repr=False)

    @property
    def n_e(self) -> int:
        return self.edges.count

    @property
    def n_h(self) -> int:
        return self.faces.count

    @property
    def ndof(self) -> int:
        return self.edges.count + self.faces.count

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def split(self, u: np.ndarray) -> "StateVector":
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.ndof:
            raise ValueError(f"vector of length {u.shape[0]} does not conform to grid with {self.ndof} DOFs")
        return StateVector(u[: self.n_e], u[self.n_e :])

    def describe(self) -> dict:
        return {
            "cells_per_axis": list(self.cells_per_axis),
            "spacing": self.spacing,
            "masked_cells": int(self.domain_mask.sum()),
            "e_dofs": self.n_e,
            "h_dofs": self.n_h,
            "boundary_split": self.boundary_split.to_json(),
        }


@dataclass
class StateVector:
    e_part: np.ndarray
    h_part: np.ndarray

    def combined(self) -> np.ndarray:
        return np.concatenate([self.e_part, self.h_part])

    @classmethod
    def zeros(cls, grid: Grid) -> "StateVector":
        return cls(np.zeros(grid.n_e), np.zeros(grid.n_h))


def _sl(axis: int, s: slice, base=None) -> tuple:
    out = list(base) if base is not None else [slice(None)] * 3
    out[axis] = s
    return tuple(out)


def _edge_neighbour_count(padded: np.ndarray, a: int) -> np.ndarray:
    """Number of masked cells around each edge along axis ``a``."""
    b, c = [x for x in range(3) if x != a]
    total = 0
    for sb in (slice(None, -1), slice(1, None)):
        for sc in (slice(None, -1), slice(1, None)):
            idx = [slice(1, -1)] * 3
            idx[b] = sb
            idx[c] = sc
            total = total + padded[tuple(idx)].astype(np.int8)
    return total


def _face_neighbour_count(padded: np.ndarray, a: int) -> np.ndarray:
    lo = [slice(1, -1)] * 3
    hi = [slice(1, -1)] * 3
    lo[a] = slice(None, -1)
    hi[a] = slice(1, None)
    return padded[tuple(lo)].astype(np.int8) + padded[tuple(hi)].astype(np.int8)


def _boundary_faces_gamma1(mask: np.ndarray, padded: np.ndarray, split: BoundarySplit) -> list:
    """Per face axis, boolean array of boundary faces assigned to Gamma_1."""
    shape = mask.shape
    out = []
    for a in range(3):
        count = _face_neighbour_count(padded, a)
        boundary = count == 1
        gamma2 = np.zeros_like(boundary)
        on_box = np.zeros_like(boundary)
        for side, pos in (("-", 0), ("+", shape[a])):
            sl = _sl(a, slice(pos, pos + 1))
            on_box[sl] = True
            if f"{AXES[a]}{side}" in split.gamma2_sides:
                gamma2[sl] = True
        if split.holes_gamma2:
            gamma2 |= ~on_box
        out.append(boundary & ~gamma2)
    return out


def build_grid(cells_per_axis: Iterable[int], spacing: float = 1.0, domain_mask=None,
               boundary_split: BoundarySplit | None = None) -> Grid:
    """Build a staggered voxel grid.

    Parameters
    ----------
    cells_per_axis : three positive integers
    spacing : uniform cell size h
    domain_mask : boolean array of shape ``cells_per_axis`` (default: full box)
    boundary_split : Gamma_1/Gamma_2 classification (default: all Gamma_1)
    """
    n = tuple(int(x) for x in cells_per_axis)
    if len(n) != 3 or min(n) < 1:
        raise GridValidationError(f"cells_per_axis must be three positive integers, got {cells_per_axis!r}")
    if not (spacing > 0 and np.isfinite(spacing)):
        raise GridValidationError(f"spacing must be positive, got {spacing!r}")
    if boundary_split is None:
        boundary_split = BoundarySplit.all_gamma1()
    elif not isinstance(boundary_split, BoundarySplit):
        boundary_split = BoundarySplit.from_json(boundary_split)
    mask = np.ones(n, dtype=bool) if domain_mask is None else np.asarray(domain_mask, dtype=bool)
    if mask.shape != n:
        raise GridValidationError(f"domain_mask shape {mask.shape} != cells_per_axis {n}")
    if not mask.any():
        raise DomainError("domain mask selects no cells")
    mask = mask.copy()
    mask.setflags(write=False)

    padded = np.zeros(tuple(x + 2 for x in n), dtype=bool)
    padded[1:-1, 1:-1, 1:-1] = mask
    gamma1_faces = _boundary_faces_gamma1(mask, padded, boundary_split)

    edge_present, edge_g1 = [], []
    for a in range(3):
        present = _edge_neighbour_count(padded, a) > 0
        on_g1 = np.zeros_like(present)
        edge_present.append(present)
        edge_g1.append(on_g1)
    # an edge on any Gamma_1 face is tangential to Gamma_1
    for a, b, c in CYCLIC:
        g1 = gamma1_faces[a]
        # edges along b on face normal a: c-node at f_c and f_c + 1
        edge_g1[b][_sl(c, slice(None, -1))] |= g1
        edge_g1[b][_sl(c, slice(1, None))] |= g1
        # edges along c: b-node at f_b and f_b + 1
        edge_g1[c][_sl(b, slice(None, -1))] |= g1
        edge_g1[c][_sl(b, slice(1, None))] |= g1

    edges = _index_space("E_edges", [p & ~g for p, g in zip(edge_present, edge_g1)])
    faces = _index_space("H_faces", [_face_neighbour_count(padded, a) > 0 for a in range(3)])

    node_present = np.zeros(tuple(x + 1 for x in n), dtype=bool)
    node_g1 = np.zeros_like(node_present)
    for a in range(3):
        for s in (slice(None, -1), slice(1, None)):
            node_present[_sl(a, s)] |= edge_present[a]
            node_g1[_sl(a, s)] |= edge_g1[a]

    return Grid(n, float(spacing), mask, boundary_split, edges, faces,
                tuple(edge_present), tuple(edge_g1), node_present, node_g1)


def _index_space(kind: str, keep: list) -> DofSpace:
    locs, lookup, offset = [], [], 0
    for a, k in enumerate(keep):
        ijk = np.argwhere(k)
        idx = np.full(k.shape, -1, dtype=np.int64)
        idx[tuple(ijk.T)] = np.arange(offset, offset + len(ijk))
        offset += len(ijk)
        locs.append(np.column_stack([np.full(len(ijk), a), ijk]))
        idx.setflags(write=False)
        lookup.append(idx)
    location = np.concatenate(locs).astype(np.int64) if locs else np.zeros((0, 4), dtype=np.int64)
    location.setflags(write=False)
    return DofSpace(kind, location, tuple(lookup))


def inner_product(x, y, grid: Grid) -> float:
    """Discrete L2 pairing h^3 * (<e_x, e_y> + <h_x, h_y>)."""
    xv = x.combined() if isinstance(x, StateVector) else np.asarray(x, dtype=float)
    yv = y.combined() if isinstance(y, StateVector) else np.asarray(y, dtype=float)
    if xv.shape != (grid.ndof,) or yv.shape != (grid.ndof,):
        raise ValueError(f"vectors of shape {xv.shape}, {yv.shape} do not conform to {grid.ndof} DOFs")
    return grid.cell_volume * float(xv @ yv)


def full_edge_count(n) -> int:
    nx, ny, nz = n
    return nx * (ny + 1) * (nz + 1) + (nx + 1) * ny * (nz + 1) + (nx + 1) * (ny + 1) * nz


def full_face_count(n) -> int:
    nx, ny, nz = n
    return (nx + 1) * ny * nz + nx * (ny + 1) * nz + nx * ny * (nz + 1)
