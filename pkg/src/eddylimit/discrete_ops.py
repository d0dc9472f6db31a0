"""Sparse curl pair, the skew block operator and discrete time calculus.

Time derivative and its inverse act on trajectories with zero history:
``d0`` is the backward difference used by the implicit stepper, and
``d0_inverse`` the causal cumulative sum, so the two are exact inverses.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .mesh import CYCLIC, DofSpace, Grid, _sl


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Real sparse matrix with explicit row and column DOF spaces."""

    rows: DofSpace | str
    cols: DofSpace | str
    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"operand length {x.shape[0]} != operator columns {self.shape[1]}")
        return self.matrix @ x

    @property
    def T(self) -> "SparseOperator":
        return SparseOperator(self.cols, self.rows, self.matrix.T.tocsr())

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def to_coo_text(self) -> str:
        """``row col value`` per line, row-major order."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_coo_text(cls, text: str, shape, rows="rows", cols="cols") -> "SparseOperator":
        data = np.loadtxt(text.splitlines(), ndmin=2) if text.strip() else np.zeros((0, 3))
        m = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)
        return cls(rows, cols, m.tocsr())

    @classmethod
    def diag(cls, values, space="combined") -> "SparseOperator":
        return cls(space, space, sp.diags(np.asarray(values, dtype=float)).tocsr())


def assemble_curl0(grid: Grid) -> SparseOperator:
    """Edge-to-face circulation, coefficient +-1/h, retained E edges only."""
    inv_h = 1.0 / grid.spacing
    E = grid.edges.lookup
    rows, cols, vals = [], [], []
    for a, b, c in CYCLIC:
        fidx = grid.faces.lookup[a]
        present = fidx >= 0
        # (curl E)_a = d_b E_c - d_c E_b
        terms = (
            (E[c][_sl(b, slice(1, None))], inv_h),
            (E[c][_sl(b, slice(None, -1))], -inv_h),
            (E[b][_sl(c, slice(1, None))], -inv_h),
            (E[b][_sl(c, slice(None, -1))], inv_h),
        )
        for eidx, coef in terms:
            keep = present & (eidx >= 0)
            rows.append(fidx[keep])
            cols.append(eidx[keep])
            vals.append(np.full(int(keep.sum()), coef))
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_h, grid.n_e),
    )
    return SparseOperator(grid.faces, grid.edges, m.tocsr())


def assemble_grad0(grid: Grid) -> SparseOperator:
    """Node-to-edge difference for potentials vanishing on Gamma_1.

    Columns are the nodes adjacent to the domain and not on Gamma_1, so the
    image lies in the retained edge space.
    """
    free = grid.node_present & ~grid.node_on_gamma1
    nidx = np.full(free.shape, -1, dtype=np.int64)
    nidx[free] = np.arange(int(free.sum()))
    inv_h = 1.0 / grid.spacing
    rows, cols, vals = [], [], []
    for a in range(3):
        eidx = grid.edges.lookup[a]
        for s, coef in ((slice(1, None), inv_h), (slice(None, -1), -inv_h)):
            nid = nidx[_sl(a, s)]
            keep = (eidx >= 0) & (nid >= 0)
            rows.append(eidx[keep])
            cols.append(nid[keep])
            vals.append(np.full(int(keep.sum()), coef))
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_e, int(free.sum())),
    )
    return SparseOperator(grid.edges, "nodes", m.tocsr())


@dataclass(frozen=True, eq=False)
class BlockOperatorA:
    """A = [[0, -curl0^T], [curl0, 0]], skew for the h^3-weighted pairing."""

    curl0: SparseOperator
    _full: sp.csr_matrix = field(default=None, repr=False)

    def __post_init__(self):
        C = self.curl0.matrix
        n_h, n_e = C.shape
        full = sp.bmat([[sp.csr_matrix((n_e, n_e)), -C.T], [C, sp.csr_matrix((n_h, n_h))]], format="csr")
        object.__setattr__(self, "_full", full)

    @classmethod
    def from_grid(cls, grid: Grid) -> "BlockOperatorA":
        return cls(assemble_curl0(grid))

    @property
    def n_e(self) -> int:
        return self.curl0.shape[1]

    @property
    def ndof(self) -> int:
        return sum(self.curl0.shape)

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._full


def apply_A(A: BlockOperatorA, u) -> np.ndarray:
    if hasattr(u, "combined"):
        u = u.combined()
    u = np.asarray(u, dtype=float)
    if u.shape[0] != A.ndof:
        raise ValueError(f"state of length {u.shape[0]} does not conform to {A.ndof} DOFs")
    e, h = u[: A.n_e], u[A.n_e :]
    C = A.curl0.matrix
    return np.concatenate([-(C.T @ h), C @ e])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States u_n at t_n = n * tau for n = start_index, start_index + 1, ...

    ``states`` has shape (n_steps, ndof).  ``cell_volume`` is the h^3 factor
    of the spatial pairing (1 for plain Euclidean vectors).
    """

    tau: float
    states: np.ndarray
    rho: float = 1.0
    start_index: int = 0
    cell_volume: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        object.__setattr__(self, "states", s)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return (self.start_index + np.arange(self.n_steps)) * self.tau

    def with_states(self, states) -> "Trajectory":
        return replace(self, states=states)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return self.with_states(self.states - other.states)


def d0_apply(traj: Trajectory) -> Trajectory:
    """Backward difference (u_n - u_{n-1}) / tau with zero history."""
    if traj.n_steps < 1:
        raise ValueError("d0_apply needs at least one state")
    u = traj.states
    out = np.empty_like(u)
    out[0] = u[0]
    out[1:] = u[1:] - u[:-1]
    return traj.with_states(out / traj.tau)


def d0_inverse_apply(traj: Trajectory) -> Trajectory:
    """Causal cumulative sum tau * sum_{k<=n} u_k."""
    return traj.with_states(traj.tau * np.cumsum(traj.states, axis=0))


def time_weights(traj: Trajectory) -> np.ndarray:
    """Left-endpoint quadrature weights tau * exp(-2 rho t_n)."""
    return traj.tau * np.exp(-2.0 * traj.rho * traj.times)


def weighted_inner(x: Trajectory, y: Trajectory) -> float:
    w = time_weights(x)
    return x.cell_volume * float(np.einsum("n,ni,ni->", w, x.states, y.states))


def weighted_norm(traj: Trajectory) -> float:
    """sqrt(sum_n tau exp(-2 rho t_n) ||u_n||_H^2)."""
    w = time_weights(traj)
    sq = np.einsum("ni,ni->n", traj.states, traj.states)
    return float(np.sqrt(traj.cell_volume * (w @ sq)))


def rho_tau(rho: float, tau: float) -> float:
    """Accretivity constant of the backward difference, (1 - e^{-2 rho tau}) / (2 tau)."""
    return -np.expm1(-2.0 * rho * tau) / (2.0 * tau)


def check_discrete_d0_positivity(traj: Trajectory) -> float:
    """Return <u, d0 u>_rho / ||u||_rho^2; bounded below by ``rho_tau``."""
    nrm2 = weighted_inner(traj, traj)
    if nrm2 == 0.0:
        raise ValueError("zero trajectory")
    return weighted_inner(traj, d0_apply(traj)) / nrm2
