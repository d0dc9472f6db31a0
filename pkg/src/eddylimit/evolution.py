"""Implicit Euler for (d0 M + N + A) u = F with zero history.

Each step solves S u_{n+1} = F_{n+1} + (M/tau) u_n with S = M/tau + N + A,
written in increment form for u_{n+1} - u_n.
Because the H block of M/tau + N is positive, H is eliminated and the
E unknowns satisfy the SPD system

    (D_e + C^T D_h^{-1} C) e = b_e + C^T D_h^{-1} b_h,

solved either by preconditioned CG (default, accuracy set by ``lin_tol``)
or by a sparse LU factorized once per problem.  Degenerate (eps = 0)
E DOFs need no special casing: their D_e entry is sigma > 0.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .discrete_ops import BlockOperatorA, SparseOperator, Trajectory, weighted_norm
from .materials import positivity_constant

log = logging.getLogger(__name__)

SOLVERS = ("cg", "direct")


class LinearSolverError(RuntimeError):
    def __init__(self, step, residual, tol):
        super().__init__(f"linear solve at step {step} reached relative residual {residual:.3e} > {tol:.1e}")
        self.step = step
        self.residual = residual


@dataclass(eq=False)
class EvolutionProblem:
    """Inputs of one causal solve.

    ``forcing`` holds F_1 ... F_N at t_n = n * tau (start_index 1); the
    returned solution uses the same time indices.
    """

    M: SparseOperator
    N: SparseOperator
    A: BlockOperatorA
    forcing: Trajectory
    tau: float
    T: float
    rho: float
    lin_tol: float = 1e-10
    solver: str = "cg"

    def __post_init__(self):
        if not (self.tau > 0 and self.T > 0 and self.rho > 0):
            raise ValueError("tau, T and rho must be positive")
        ratio = self.T / self.tau
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T / tau = {ratio} is not an integer step count")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        n = self.A.ndof
        for name, op in (("M", self.M), ("N", self.N)):
            if op.shape != (n, n):
                raise ValueError(f"{name} has shape {op.shape}, expected {(n, n)}")
            if sp.triu(op.matrix, 1).nnz or sp.tril(op.matrix, -1).nnz:
                raise ValueError(f"{name} must be diagonal")
        if self.forcing.states.shape != (self.n_steps, n):
            raise ValueError(f"forcing has shape {self.forcing.states.shape}, expected {(self.n_steps, n)}")
        if self.forcing.start_index != 1:
            raise ValueError("forcing must start at index 1 (t = tau)")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    def with_forcing(self, forcing: Trajectory) -> "EvolutionProblem":
        return EvolutionProblem(self.M, self.N, self.A, forcing, self.tau, self.T, self.rho,
                                self.lin_tol, self.solver)


@dataclass
class SolveResult:
    solution: Trajectory
    per_step_linear_residuals: np.ndarray
    wall_time: float
    iterations: int = 0


def step_matrix(problem: EvolutionProblem) -> SparseOperator:
    """S = M/tau + N + A; raises ModelInvalidError if M/tau + N is not positive."""
    m, n = problem.M.diagonal(), problem.N.diagonal()
    positivity_constant(m, n, 1.0 / problem.tau, n_e=problem.A.n_e)
    S = sp.diags(m / problem.tau + n) + problem.A.matrix
    return SparseOperator("combined", "combined", S.tocsr())


@dataclass(eq=False)
class _Stepper:
    """Reusable solver for S x = b via elimination of the H block."""

    m_over_tau: np.ndarray
    d_e: np.ndarray
    d_h: np.ndarray
    C: sp.csr_matrix
    S: sp.csr_matrix
    lin_tol: float
    solver: str
    K: sp.csr_matrix = field(init=False)

    def __post_init__(self):
        Dh_inv = sp.diags(1.0 / self.d_h)
        self.K = (sp.diags(self.d_e) + self.C.T @ Dh_inv @ self.C).tocsr()
        self._lu = None
        self._precond = None
        if self.solver == "direct":
            self._lu = sla.splu(self.K.tocsc(), permc_spec="MMD_AT_PLUS_A")
        else:
            inv_diag = 1.0 / self.K.diagonal()
            self._precond = sla.LinearOperator(self.K.shape, matvec=lambda x: inv_diag * x, dtype=float)
        self.iterations = 0

    @classmethod
    def for_problem(cls, problem: EvolutionProblem) -> "_Stepper":
        S = step_matrix(problem).matrix
        m, n = problem.M.diagonal(), problem.N.diagonal()
        d = m / problem.tau + n
        ne = problem.A.n_e
        return cls(m / problem.tau, d[:ne], d[ne:], problem.A.curl0.matrix, S,
                   problem.lin_tol, problem.solver)

    def _solve_e(self, rhs_e, x0, rtol):
        if self._lu is not None:
            return self._lu.solve(rhs_e)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = sla.cg(self.K, rhs_e, x0=x0, rtol=rtol, atol=0.0, M=self._precond,
                         maxiter=10 * self.K.shape[0], callback=cb)
        self.iterations += count[0]
        return x

    def solve(self, b: np.ndarray, x0: np.ndarray, step: int):
        ne = self.d_e.shape[0]
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b), 0.0
        b_e, b_h = b[:ne], b[ne:]
        rhs_e = b_e + self.C.T @ (b_h / self.d_h)
        # the full-system residual equals the Schur residual in the E block
        rtol = self.lin_tol * bnorm / max(np.linalg.norm(rhs_e), bnorm)
        e = self._solve_e(rhs_e, x0[:ne], rtol)
        for _ in range(4):
            x = np.concatenate([e, (b_h - self.C @ e) / self.d_h])
            res = np.linalg.norm(self.S @ x - b) / bnorm
            if res <= self.lin_tol:
                return x, res
            # correction solve: refinement for LU, restart for CG
            r_e = rhs_e - self.K @ e
            corr_tol = min(0.1, 0.5 * rtol * np.linalg.norm(rhs_e) / max(np.linalg.norm(r_e), 1e-300))
            e = e + self._solve_e(r_e, np.zeros_like(e), corr_tol)
        raise LinearSolverError(step, res, self.lin_tol)


def solve_evolution(problem: EvolutionProblem) -> SolveResult:
    """March the causal recurrence from zero history."""
    t0 = time.perf_counter()
    stepper = _Stepper.for_problem(problem)
    F = problem.forcing.states
    out = np.zeros_like(F)
    residuals = np.zeros(problem.n_steps)
    prev = np.zeros(problem.A.ndof)
    delta = np.zeros_like(prev)
    for k in range(problem.n_steps):
        b = F[k] + stepper.m_over_tau * prev
        # increment form: S delta = b - S u_n, so lin_tol bounds the update error
        delta, _ = stepper.solve(b - stepper.S @ prev, delta, step=k + 1)
        prev = prev + delta
        bnorm = np.linalg.norm(b)
        residuals[k] = np.linalg.norm(stepper.S @ prev - b) / bnorm if bnorm else 0.0
        out[k] = prev
    wall = time.perf_counter() - t0
    log.debug("solved %d steps in %.2fs (%d CG iterations)", problem.n_steps, wall, stepper.iterations)
    sol = Trajectory(problem.tau, out, problem.rho, start_index=1,
                     cell_volume=problem.forcing.cell_volume)
    return SolveResult(sol, residuals, wall, stepper.iterations)


def verify_causality(problem: EvolutionProblem, cutoff_a: float, result: SolveResult | None = None) -> float:
    """max over t_n <= a of ||u_n||_H for a forcing that vanishes on [0, a]."""
    times = problem.forcing.times
    before = times <= cutoff_a + 1e-12 * problem.tau
    if np.any(problem.forcing.states[before]):
        raise ValueError(f"forcing does not vanish for t <= {cutoff_a}")
    if result is None:
        result = solve_evolution(problem)
    u = result.solution.states[before]
    if u.shape[0] == 0:
        return 0.0
    return float(np.sqrt(problem.forcing.cell_volume * np.einsum("ni,ni->n", u, u).max()))


def export_csv(result: SolveResult, n_e: int, path) -> None:
    """Write ``step,time,e_norm,h_norm`` rows."""
    sol = result.solution
    vol = sol.cell_volume
    e = np.sqrt(vol * np.einsum("ni,ni->n", sol.states[:, :n_e], sol.states[:, :n_e]))
    h = np.sqrt(vol * np.einsum("ni,ni->n", sol.states[:, n_e:], sol.states[:, n_e:]))
    steps = sol.start_index + np.arange(sol.n_steps)
    table = np.column_stack([steps, sol.times, e, h])
    np.savetxt(path, table, delimiter=",", header="step,time,e_norm,h_norm", comments="",
               fmt=["%d", "%.17g", "%.17g", "%.17g"])


def export_binary(traj: Trajectory, path) -> None:
    """Raw little-endian float64 dump, row-major (step, DOF in index_map order)."""
    np.ascontiguousarray(traj.states, dtype="<f8").tofile(path)


def load_binary(path, ndof: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f8")
    return data.reshape(-1, ndof)


def energy_ratio(result: SolveResult, forcing: Trajectory) -> float:
    fn = weighted_norm(forcing)
    return 0.0 if fn == 0 else weighted_norm(result.solution) / fn
