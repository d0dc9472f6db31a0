import numpy as np
import pytest
import scipy.sparse as sp

from eddylimit.discrete_ops import BlockOperatorA, SparseOperator, Trajectory, rho_tau, weighted_norm
from eddylimit.evolution import (
    EvolutionProblem,
    LinearSolverError,
    energy_ratio,
    export_binary,
    export_csv,
    load_binary,
    solve_evolution,
    verify_causality,
)
from eddylimit.harness import Setup
from eddylimit.materials import LimitFamily, ModelInvalidError, assemble_M, assemble_N, wellposedness_constant
from eddylimit.scenarios import LaminatedCoreScenario, TimeProfile, build_laminated_core, build_unit_test_scenario


def scalar_problem(m, n, F, tau, solver="cg"):
    A = BlockOperatorA(SparseOperator("h", "e", sp.csr_matrix((0, 1))))
    F = np.asarray(F, float).reshape(-1, 1)
    forcing = Trajectory(tau, F, 1.0, start_index=1)
    return EvolutionProblem(SparseOperator.diag([m]), SparseOperator.diag([n]), A, forcing,
                            tau, tau * F.shape[0], 1.0, solver=solver)


@pytest.mark.parametrize("solver", ["cg", "direct"])
def test_scalar_ramp(solver):
    # m = 1, n = 0: S = 1/tau, u_n = u_{n-1} + tau
    res = solve_evolution(scalar_problem(1.0, 0.0, np.ones(10), 0.1, solver))
    np.testing.assert_allclose(res.solution.states[:, 0], 0.1 * np.arange(1, 11), rtol=1e-12)
    np.testing.assert_allclose(res.solution.times, 0.1 * np.arange(1, 11))


def test_scalar_pure_conduction():
    # m = 0 (eddy-current limit), n = 2: u = F / 2 instantaneously
    F = np.sin(np.arange(1, 21))
    res = solve_evolution(scalar_problem(0.0, 2.0, F, 0.05))
    np.testing.assert_allclose(res.solution.states[:, 0], F / 2, rtol=1e-12)


def test_scalar_decay():
    # m = 1, n = 20, tau = 0.1: S = 30; u_1 = 1/30, then u_n = u_{n-1} * 10 / 30
    F = np.zeros(5)
    F[0] = 1.0
    u = solve_evolution(scalar_problem(1.0, 20.0, F, 0.1)).solution.states[:, 0]
    np.testing.assert_allclose(u, (1 / 30) * (1 / 3) ** np.arange(5), rtol=1e-12)


def test_degenerate_scalar_rejected():
    with pytest.raises(ModelInvalidError):
        solve_evolution(scalar_problem(0.0, 0.0, np.ones(3), 0.1))


def dense_march(problem):
    M = problem.M.matrix.toarray()
    S = M / problem.tau + problem.N.matrix.toarray() + problem.A.matrix.toarray()
    u = np.zeros(problem.A.ndof)
    out = []
    for F in problem.forcing.states:
        u = np.linalg.solve(S, F + M @ u / problem.tau)
        out.append(u)
    return np.array(out)


@pytest.fixture(scope="module")
def small_setup():
    built = build_unit_test_scenario("single_conductor_block", tau=0.05, T=1.0, cells=5)
    return Setup(built, 0.05, 1.0, 1.0)


@pytest.mark.parametrize("s", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("solver", ["cg", "direct"])
def test_matches_dense_recurrence(small_setup, s, solver):
    prob = small_setup.with_(solver=solver).problem(s)
    res = solve_evolution(prob)
    ref = dense_march(prob)
    scale = np.abs(ref).max()
    assert np.abs(res.solution.states - ref).max() <= 1e-8 * scale
    assert res.per_step_linear_residuals.max() <= prob.lin_tol


def test_zero_forcing_gives_zero(small_setup):
    f = small_setup.forcing.with_states(np.zeros_like(small_setup.forcing.states))
    res = small_setup.solve(0.0, f)
    assert not res.solution.states.any()
    assert energy_ratio(res, f) == 0.0


def test_superposition(small_setup, rng):
    F = small_setup.forcing
    G = F.with_states(rng.standard_normal(F.states.shape))
    a, b = 0.7, -1.3
    uF = small_setup.solve(0.0, F).solution.states
    uG = small_setup.solve(0.0, G).solution.states
    uH = small_setup.solve(0.0, F.with_states(a * F.states + b * G.states)).solution.states
    assert np.abs(uH - (a * uF + b * uG)).max() <= 1e-8 * np.abs(uH).max()


def test_energy_bound_8cubed():
    sc = LaminatedCoreScenario(outer_box_cells=(8, 8, 8), core_lo=(2, 2, 2), core_hi=(6, 6, 6))
    tau, T, rho = 0.05, 1.0, 1.0
    built = build_laminated_core(sc, tau, T, rho)
    setup = Setup(built, tau, T, rho)
    for s in (0.0, 1.0):
        fam = setup.family.at(s)
        c_tau = wellposedness_constant(fam, rho_tau(rho, tau))
        res = setup.solve(s)
        assert energy_ratio(res, setup.forcing) <= 1.0 / c_tau


def test_causality_with_delayed_forcing(small_setup):
    prof = TimeProfile("step", amplitude=1.0, onset=0.5)
    f = small_setup.forcing_with(prof)
    prob = small_setup.problem(0.0, f)
    assert verify_causality(prob, 0.5) == 0.0
    with pytest.raises(ValueError):
        verify_causality(prob, 0.8)


def test_forcings_agreeing_up_to_a_give_equal_solutions(small_setup, rng):
    F = small_setup.forcing
    states = F.states.copy()
    late = F.times > 0.5
    states[late] += rng.standard_normal((late.sum(), states.shape[1]))
    u1 = small_setup.solve(1.0, F).solution.states
    u2 = small_setup.solve(1.0, F.with_states(states)).solution.states
    np.testing.assert_array_equal(u1[~late], u2[~late])
    assert np.abs(u1[late] - u2[late]).max() > 0


def test_exports(tmp_path, small_setup):
    res = small_setup.solve(1.0)
    n_e = small_setup.grid.n_e
    export_csv(res, n_e, tmp_path / "out.csv")
    table = np.loadtxt(tmp_path / "out.csv", delimiter=",", skiprows=1)
    assert table.shape == (res.solution.n_steps, 4)
    np.testing.assert_array_equal(table[:, 0], np.arange(1, res.solution.n_steps + 1))
    e = res.solution.states[-1, :n_e]
    assert table[-1, 2] == pytest.approx(np.linalg.norm(e), rel=1e-15)
    assert (tmp_path / "out.csv").read_text().splitlines()[0] == "step,time,e_norm,h_norm"
    export_binary(res.solution, tmp_path / "out.bin")
    assert (tmp_path / "out.bin").stat().st_size == 8 * res.solution.states.size
    np.testing.assert_array_equal(load_binary(tmp_path / "out.bin", small_setup.grid.ndof), res.solution.states)


def test_solver_failure_raises(small_setup, monkeypatch):
    prob = small_setup.with_(lin_tol=1e-30).problem(1.0)
    with pytest.raises(LinearSolverError) as info:
        solve_evolution(prob)
    assert info.value.step == 1


def test_problem_validation(small_setup):
    prob = small_setup.problem(1.0)
    with pytest.raises(ValueError):
        EvolutionProblem(prob.M, prob.N, prob.A, prob.forcing, 0.05, 1.01, 1.0)
    with pytest.raises(ValueError):
        EvolutionProblem(prob.M, prob.N, prob.A, prob.forcing, 0.05, 1.0, 1.0, solver="gmres")
    with pytest.raises(ValueError):
        wrong = Trajectory(0.05, prob.forcing.states, 1.0, start_index=0)
        EvolutionProblem(prob.M, prob.N, prob.A, wrong, 0.05, 1.0, 1.0)
    dense = SparseOperator("c", "c", sp.csr_matrix(np.ones((prob.A.ndof, prob.A.ndof))))
    with pytest.raises(ValueError):
        EvolutionProblem(dense, prob.N, prob.A, prob.forcing, 0.05, 1.0, 1.0)


def test_weighted_solution_norm_consistent(small_setup):
    res = small_setup.solve(0.0)
    sol = res.solution
    t = sol.times
    manual = np.sqrt(np.sum(0.05 * np.exp(-2 * t) * (sol.states ** 2).sum(axis=1)))
    assert weighted_norm(sol) == pytest.approx(manual, rel=1e-12)
