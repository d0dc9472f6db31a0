"""Diagonal material operators and the eddy-current limit family.

Cells carry a region label; edge and face coefficients are the mean over
adjacent cells inside the domain.  The core-metal dielectricity is scaled
by the family parameter s, so eps_s = eps_fixed + s * eps_metal per edge.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discrete_ops import SparseOperator
from .mesh import Grid, _edge_neighbour_count, _face_neighbour_count

AIR, INSULATOR, CORE_METAL = 0, 1, 2
REGION_NAMES = {AIR: "air", INSULATOR: "insulator", CORE_METAL: "core_metal"}


class ModelInvalidError(ValueError):
    """rho*M + N is not uniformly positive."""

    def __init__(self, message, dof=None, region=None, value=None):
        super().__init__(message)
        self.dof = dof
        self.region = region
        self.value = value


@dataclass(frozen=True)
class Coefficients:
    eps_air: float = 1.0
    eps_lam: float = 2.0
    eps_cor: float = 10.0
    sigma_cor: float = 5.0
    mu: float = 1.0

    def __post_init__(self):
        for name in ("eps_air", "eps_lam", "eps_cor", "sigma_cor", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.mu <= 0:
            raise ValueError("mu must be positive")


@dataclass(frozen=True, eq=False)
class MaterialMap:
    """Per-DOF coefficients.

    ``eps_fixed`` collects the air and insulator contributions of each E
    edge, ``eps_metal`` the metal part at s = 1.  ``edge_region`` is the
    label of the dominant adjacent region (metal over insulator over air).
    """

    eps_fixed: np.ndarray
    eps_metal: np.ndarray
    sigma_per_E_dof: np.ndarray
    mu_per_H_dof: np.ndarray
    region_labels: np.ndarray
    edge_region: np.ndarray

    @property
    def eps_per_E_dof(self) -> np.ndarray:
        return self.eps_fixed + self.eps_metal


def _padded(grid: Grid, values: np.ndarray) -> np.ndarray:
    n = grid.cells_per_axis
    out = np.zeros(tuple(x + 2 for x in n))
    out[1:-1, 1:-1, 1:-1] = np.where(grid.domain_mask, values, 0.0)
    return out


def _edge_mean(grid: Grid, cell_values: np.ndarray) -> np.ndarray:
    pm = np.zeros(tuple(x + 2 for x in grid.cells_per_axis), dtype=bool)
    pm[1:-1, 1:-1, 1:-1] = grid.domain_mask
    pv = _padded(grid, cell_values)
    out = np.empty(grid.n_e)
    for a in range(3):
        idx = grid.edges.lookup[a]
        keep = idx >= 0
        out[idx[keep]] = (_edge_neighbour_sum(pv, a) / np.maximum(_edge_neighbour_count(pm, a), 1))[keep]
    return out


def _edge_neighbour_sum(padded: np.ndarray, a: int) -> np.ndarray:
    b, c = [x for x in range(3) if x != a]
    total = 0.0
    for sb in (slice(None, -1), slice(1, None)):
        for sc in (slice(None, -1), slice(1, None)):
            idx = [slice(1, -1)] * 3
            idx[b] = sb
            idx[c] = sc
            total = total + padded[tuple(idx)]
    return total


def _face_mean(grid: Grid, cell_values: np.ndarray) -> np.ndarray:
    pm = np.zeros(tuple(x + 2 for x in grid.cells_per_axis), dtype=bool)
    pm[1:-1, 1:-1, 1:-1] = grid.domain_mask
    pv = _padded(grid, cell_values)
    out = np.empty(grid.n_h)
    for a in range(3):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[a] = slice(None, -1)
        hi[a] = slice(1, None)
        s = pv[tuple(lo)] + pv[tuple(hi)]
        idx = grid.faces.lookup[a]
        keep = idx >= 0
        out[idx[keep]] = (s / np.maximum(_face_neighbour_count(pm, a), 1))[keep]
    return out


def build_material_map(grid: Grid, region_labels: np.ndarray, coeffs: Coefficients) -> MaterialMap:
    labels = np.asarray(region_labels)
    if labels.shape != grid.cells_per_axis:
        raise ValueError(f"region_labels shape {labels.shape} != grid cells {grid.cells_per_axis}")
    if not np.isin(labels[grid.domain_mask], list(REGION_NAMES)).all():
        raise ValueError("region labels must be air (0), insulator (1) or core_metal (2)")
    eps_fixed = np.select([labels == AIR, labels == INSULATOR], [coeffs.eps_air, coeffs.eps_lam], 0.0)
    eps_metal = np.where(labels == CORE_METAL, coeffs.eps_cor, 0.0)
    sigma = np.where(labels == CORE_METAL, coeffs.sigma_cor, 0.0)
    mu = np.full(labels.shape, coeffs.mu, dtype=float)
    dominant = np.zeros(grid.n_e, dtype=np.int8)
    for lab in (INSULATOR, CORE_METAL):
        touches = _edge_mean(grid, (labels == lab).astype(float)) > 0
        dominant[touches] = lab
    return MaterialMap(
        eps_fixed=_edge_mean(grid, eps_fixed),
        eps_metal=_edge_mean(grid, eps_metal),
        sigma_per_E_dof=_edge_mean(grid, sigma),
        mu_per_H_dof=_face_mean(grid, mu),
        region_labels=labels,
        edge_region=dominant,
    )


@dataclass(frozen=True, eq=False)
class LimitFamily:
    base: MaterialMap
    s: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"family parameter s must lie in [0, 1], got {self.s}")

    def at(self, s: float) -> "LimitFamily":
        return LimitFamily(self.base, s)

    @property
    def eps(self) -> np.ndarray:
        return self.base.eps_fixed + self.s * self.base.eps_metal

    def m_diagonal(self) -> np.ndarray:
        return np.concatenate([self.eps, self.base.mu_per_H_dof])

    def n_diagonal(self) -> np.ndarray:
        return np.concatenate([self.base.sigma_per_E_dof, np.zeros_like(self.base.mu_per_H_dof)])


def assemble_M(family: LimitFamily, grid: Grid | None = None) -> SparseOperator:
    d = family.m_diagonal()
    if grid is not None and d.shape[0] != grid.ndof:
        raise ValueError("material map does not conform to grid")
    if (d < 0).any():
        raise ValueError("negative coefficient in M")
    return SparseOperator.diag(d)


def assemble_N(material: MaterialMap | LimitFamily, grid: Grid | None = None) -> SparseOperator:
    family = material if isinstance(material, LimitFamily) else LimitFamily(material)
    d = family.n_diagonal()
    if grid is not None and d.shape[0] != grid.ndof:
        raise ValueError("material map does not conform to grid")
    if (d < 0).any():
        raise ValueError("negative sigma in N")
    return SparseOperator.diag(d)


def positivity_constant(m_diag: np.ndarray, n_diag: np.ndarray, rho: float, n_e: int | None = None,
                        edge_region: np.ndarray | None = None) -> float:
    """min diag(rho*M + N); raises ModelInvalidError naming the worst DOF if <= 0."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    d = rho * np.asarray(m_diag) + np.asarray(n_diag)
    i = int(np.argmin(d))
    c = float(d[i])
    if c <= 0:
        region = None
        if n_e is not None and i < n_e and edge_region is not None:
            region = REGION_NAMES[int(edge_region[i])]
        where = f"E DOF {i} ({region})" if region else f"DOF {i}"
        raise ModelInvalidError(f"rho*M + N has nonpositive entry {c:g} at {where}; eps = 0 and sigma = 0 there",
                                dof=i, region=region, value=c)
    return c


def wellposedness_constant(family: LimitFamily, rho: float) -> float:
    """c = min over the diagonal of rho*M_s + N_s."""
    return positivity_constant(family.m_diagonal(), family.n_diagonal(), rho,
                               n_e=family.base.eps_fixed.shape[0], edge_region=family.base.edge_region)


def uniform_family_bound(family: LimitFamily, s_values, rho: float) -> float:
    s_values = list(s_values)
    if not s_values:
        raise ValueError("empty set of s values")
    return min(wellposedness_constant(family.at(s), rho) for s in s_values)
