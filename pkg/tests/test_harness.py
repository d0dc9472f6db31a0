import json

import numpy as np
import pytest

from eddylimit.discrete_ops import rho_tau, weighted_norm
from eddylimit.harness import (
    Setup,
    StudyReport,
    digest,
    fit_loglog,
    random_unit_forcings,
    study_causality,
    study_convergence_rate,
    study_resolvent_identity,
    study_smoothed_operator_convergence,
    study_structure_checks,
    study_uniform_bound,
)
from eddylimit.mesh import BoundarySplit, build_grid
from eddylimit.scenarios import build_unit_test_scenario


def unit_setup(kind="single_conductor_block", tau=0.05, T=1.0, rho=1.0, cells=5, **kw):
    return Setup(build_unit_test_scenario(kind, tau, T, rho, cells=cells), tau, T, rho, **kw)


@pytest.fixture(scope="module")
def setup5():
    return unit_setup()


def strip_time(rep):
    d = rep.to_dict()
    d.pop("wall_time")
    return json.dumps(d, sort_keys=True)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_structure_study_passes(n, split):
    mask = np.ones((n, n, n), bool)
    mask[0, 0, 0] = n < 3
    rep = study_structure_checks(build_grid((n, n, n), 0.7, mask, split), n_samples=5)
    assert rep.passed, rep.measured
    assert set(rep.checks) == {"skew", "adjoint_pairing", "curl_grad"}


def test_bound_zero_forcing(setup5):
    F = setup5.forcing.with_states(np.zeros_like(setup5.forcing.states))
    rep = study_uniform_bound(setup5, [1.0, 0.0], forcing=F)
    assert [r["ratio"] for r in rep.table] == [0.0, 0.0]
    assert rep.checks["ratio_below_slack_bound"]


@pytest.mark.parametrize("rho", [0.5, 2.0])
def test_homogeneous_constant_equals_rho(rho):
    setup = unit_setup("homogeneous_box", tau=0.01, T=0.5, rho=rho, cells=4)
    rep = study_uniform_bound(setup, [1.0, 0.0])
    assert rep.measured["c"] == pytest.approx(rho, rel=1e-14)
    assert rep.measured["c_tau"] == pytest.approx(rho_tau(rho, 0.01), rel=1e-14)
    assert rep.passed


def test_bound_study_conductor(setup5):
    rep = study_uniform_bound(setup5, [1.0, 0.1, 0.0])
    assert rep.passed
    assert rep.measured["max_ratio"] * rep.measured["c"] <= 1.1
    assert rep.measured["required_slack"] == pytest.approx(rep.measured["c"] / rep.measured["c_tau"] - 1)


def test_required_slack_decreases_with_tau():
    slacks = [study_uniform_bound(unit_setup(tau=tau, T=0.4), [1.0, 0.0]).measured["required_slack"]
              for tau in (0.04, 0.02, 0.01)]
    assert slacks[0] > slacks[1] > slacks[2] > 0


def test_causality_study(setup5):
    rep = study_causality(setup5, [0.25, 0.5])
    assert rep.passed
    assert rep.measured["max_relative_precutoff_norm"] == 0.0
    assert len(rep.table) == 4


def test_identity_vacuous_at_zero(setup5):
    rep = study_resolvent_identity(setup5, 0.0)
    assert rep.measured["vacuous"] and rep.passed


def test_identity_holds(setup5):
    rep = study_resolvent_identity(setup5, 0.1)
    assert not rep.measured["vacuous"]
    assert rep.measured["relative_defect"] <= 1e-8


def test_identity_defect_tracks_lin_tol():
    defects = [study_resolvent_identity(unit_setup(lin_tol=tol), 0.1).measured["relative_defect"]
               for tol in (1e-6, 1e-10)]
    assert defects[0] > defects[1]


def test_fit_loglog_exact():
    s = np.array([1e-1, 1e-2, 1e-3])
    fit = fit_loglog(s, 3 * s ** 2)
    assert fit["slope"] == pytest.approx(2.0, abs=1e-12)
    assert fit["ci_low"] == pytest.approx(2.0, abs=1e-9)
    assert fit["intercept"] == pytest.approx(np.log(3), abs=1e-12)


def test_rate_study_small(setup5):
    rep = study_convergence_rate(setup5, [1e-1, 1e-2, 1e-3])
    assert rep.checks["a_priori_bound"]
    assert rep.checks["monotone_errors"]
    assert 0.8 <= rep.fitted_rate["slope"] <= 1.2
    assert all(r["error"] > 0 for r in rep.table)


def test_tau_refinement_changes_error_by_less_than_factor_two():
    errs = []
    for tau in (0.05, 0.025):
        rep = study_convergence_rate(unit_setup(tau=tau, T=1.0), [0.1, 0.01])
        errs.append(np.array([r["error"] for r in rep.table]))
    factor = errs[1] / errs[0]
    assert np.all((factor > 0.5) & (factor < 2.0))


def test_random_forcings_unit_norm(setup5):
    fs = random_unit_forcings(setup5, 3, seed=7)
    assert all(weighted_norm(f) == pytest.approx(1.0, rel=1e-12) for f in fs)
    again = random_unit_forcings(setup5, 3, seed=7)
    assert all(np.array_equal(a.states, b.states) for a, b in zip(fs, again))


def test_smoothed_study_small(setup5):
    rep = study_smoothed_operator_convergence(setup5, [0.1, 0.01, 0.0], n_samples=10)
    assert rep.measured["r"]["0.0"] == 0.0
    assert rep.checks["zero_at_s0"]
    assert rep.checks["consistent_with_d0_inverse_norm"]
    assert rep.checks["within_theoretical_linear_bound"]
    with pytest.raises(ValueError):
        study_smoothed_operator_convergence(setup5, [0.1], n_samples=5)


def test_reports_are_deterministic(setup5):
    a = study_resolvent_identity(setup5, 0.1)
    b = study_resolvent_identity(setup5, 0.1)
    assert strip_time(a) == strip_time(b)


def test_report_serialization(tmp_path):
    rep = StudyReport("x", "abc", {"a": np.float64(1.0)}, {"m": np.int64(3)}, {"ok": np.bool_(True)},
                      [{"s": 0.1, "error": 2.0}])
    d = json.loads(rep.to_json())
    assert d["passed"] is True and d["measured"]["m"] == 3
    rep.write_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["s,error,bound,ratio,residual", "0.1,2.0,,,"]
    assert rep.summary_lines() == ["PASS x.ok"]
    assert digest({"b": 1, "a": [1, 2]}) == digest({"a": [1, 2], "b": 1})
