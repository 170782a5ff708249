import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from fairshaper import (
    FlowSpec,
    InfeasibleProblemError,
    Multipliers,
    ProportionalFairAllocator,
    SolverOptions,
    brute_force_small,
    check_feasible,
    evaluate_objective,
    read_scenario,
    solve_allocation,
    subgradient_step_d,
    subgradient_step_p,
    waiting_time_pd,
)
from fairshaper.allocator import minimum_dummy_rate, restore_feasibility
from fairshaper.exceptions import DomainError


def private(*sigmas, psi=1.0):
    return [FlowSpec(str(i + 1), s, psi) for i, s in enumerate(sigmas)]


# -- objective and feasibility -------------------------------------------------

@pytest.mark.parametrize("p,expected", [((1, 1), 0.0), ((0.5, 0.5), 2 * math.log(2)), ((0.3, 0.2), 2.8134)])
def test_objective_values(p, expected):
    assert evaluate_objective(p) == pytest.approx(expected, abs=1e-4)


def test_objective_rejects_zero_rate():
    with pytest.raises(DomainError):
        evaluate_objective([0.5, 0.0])


def test_feasible_example():
    rep = check_feasible([0.2, 0.2], [0.1, 0.1], private(10, 10))
    assert rep and rep.usage == pytest.approx(0.6)
    assert rep.waits[0] == pytest.approx(waiting_time_pd(0.2, 0.1))


def test_link_overload_is_reported():
    flows = [FlowSpec("1", 10, private=False), FlowSpec("2", 10, private=False)]
    rep = check_feasible([0.6, 0.5], [0, 0], flows)
    assert not rep
    assert any("link usage" in v for v in rep.violations)


def test_private_flow_without_dummies_is_infeasible():
    rep = check_feasible([0.2], [0.0], private(10))
    assert not rep and "d > 0" in rep.violations[0]


def test_non_private_flow_with_dummies_is_infeasible():
    rep = check_feasible([0.2], [0.1], [FlowSpec("1", 10, private=False)])
    assert not rep


def test_deadline_violation_is_reported():
    rep = check_feasible([0.3], [0.05], private(1.0))
    assert not rep and "deadline" in rep.violations[0]


# -- single steps ------------------------------------------------------------------

def test_p_step_without_multipliers_follows_log_gradient():
    p = np.array([0.2, 0.3])
    p_next, lam = subgradient_step_p(p, [0.1, 0.1], Multipliers.zeros(2), private(50, 50), 1e-3)
    assert p_next == pytest.approx(p + 1e-3 / p, rel=1e-12)
    assert lam.is_nonnegative() and not lam.as_vector().any()


def test_delay_multiplier_unchanged_on_active_deadline():
    sigma = waiting_time_pd(0.2, 0.1)
    lam = Multipliers.zeros(1)
    lam.lambda1[:] = 0.7
    for step in (subgradient_step_p, subgradient_step_d):
        _, nxt = step([0.2], [0.1], lam, [FlowSpec("1", sigma)], 1e-3)
        assert nxt.lambda1[0] == pytest.approx(0.7, abs=1e-12)


def test_slack_deadline_link_price_lowers_dummies():
    lam = Multipliers.zeros(1)
    lam.lambda2[:] = 1.0
    d_next, _ = subgradient_step_d([0.2], [0.1], lam, private(10), 1e-3)
    assert d_next[0] < 0.1


def test_violated_deadline_raises_dummies():
    lam = Multipliers.zeros(1)
    lam.lambda1[:] = 100.0
    d_next, _ = subgradient_step_d([0.2], [0.1], lam, private(1.0), 1e-3)
    assert d_next[0] > 0.1
    assert d_next[0] <= 0.8 + 1e-12


def test_non_private_dummy_rate_stays_zero():
    flows = [FlowSpec("1", 10), FlowSpec("2", 10, private=False)]
    lam = Multipliers.zeros(2)
    lam.lambda1[:] = 5.0
    d = np.array([0.1, 0.0])
    for _ in range(50):
        d, lam = subgradient_step_d([0.3, 0.3], d, lam, flows, 1e-2)
        assert d[1] == 0.0


def test_steps_do_not_mutate_inputs():
    p, d = np.array([0.2]), np.array([0.1])
    lam = Multipliers.zeros(1)
    subgradient_step_p(p, d, lam, private(3), 1e-2)
    subgradient_step_d(p, d, lam, private(3), 1e-2)
    assert p[0] == 0.2 and d[0] == 0.1 and not lam.as_vector().any()


# -- feasibility restoration ------------------------------------------------------

@given(p=st.floats(0.01, 0.95), sigma=st.floats(0.5, 50))
@settings(max_examples=100)
def test_minimum_dummy_rate_is_tight(p, sigma):
    d = minimum_dummy_rate(p, sigma)
    assert waiting_time_pd(p, d) <= sigma * (1 + 1e-12)
    if d > 1e-4 * (1 + 1e-9):
        assert waiting_time_pd(p, d * (1 - 1e-6)) > sigma * (1 - 1e-6)


@given(p=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2),
       d=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
@settings(max_examples=100)
def test_restore_feasibility_always_feasible(p, d):
    flows = private(5, 10)
    q, e = restore_feasibility(p, d, flows)
    assert check_feasible(q, e, flows, tol=1e-9)


def test_impossible_deadlines():
    with pytest.raises(InfeasibleProblemError):
        solve_allocation(private(0.01, 0.01))


# -- the solver ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def symmetric():
    return solve_allocation(private(10, 10))


def test_symmetric_flows_share_equally(symmetric):
    assert abs(symmetric.p_star[0] - symmetric.p_star[1]) < 1e-3
    assert abs(symmetric.d_star[0] - symmetric.d_star[1]) < 1e-3


def test_solution_is_feasible_and_converged(symmetric):
    assert symmetric.feasible and symmetric.converged
    assert check_feasible(symmetric.p_star, symmetric.d_star, private(10, 10), tol=1e-4)


def test_objective_trace_non_increasing(symmetric):
    assert np.all(np.diff(symmetric.objective_trace) <= 1e-6)
    assert symmetric.objective == symmetric.objective_trace[-1]


def test_multipliers_non_negative(symmetric):
    assert symmetric.multipliers.is_nonnegative()


def test_tighter_deadline_gets_larger_share():
    res = solve_allocation(private(5, 10))
    assert res.p_star[0] > res.p_star[1]
    assert res.d_star[0] > res.d_star[1]


def test_permuting_flows_permutes_solution():
    a = solve_allocation(private(6, 12))
    b = solve_allocation([FlowSpec("2", 12), FlowSpec("1", 6)])
    assert b.p_star[::-1] == pytest.approx(a.p_star, abs=1e-3)
    assert b.objective == pytest.approx(a.objective, rel=1e-4)


def test_doubling_link_rates_does_not_hurt():
    base = solve_allocation(private(5, 10))
    wide = solve_allocation(private(5, 10, psi=2.0))
    assert wide.objective <= base.objective + 1e-4


def test_non_private_flow_sends_no_dummies():
    res = solve_allocation([FlowSpec("1", 10), FlowSpec("2", 10, private=False)])
    assert res.d_star[1] == 0 and res.feasible


@pytest.mark.parametrize("sigma1", [5, 10, 15])
def test_two_flows_close_to_grid_optimum(sigma1):
    flows = private(sigma1, 10)
    res = solve_allocation(flows)
    grid = brute_force_small(flows, 1000)
    assert res.objective <= grid.objective * 1.05
    assert res.objective == pytest.approx(grid.objective, rel=0.01)


def test_single_flow_beats_grid():
    # the optimum sits at p -> 1, where U -> 0; the grid stops at p = 0.999
    flows = private(10)
    res = solve_allocation(flows)
    grid = brute_force_small(flows, 1000)
    assert grid.p[0] == pytest.approx(0.999)
    assert res.objective <= grid.objective
    assert res.p_star[0] > 0.999


def test_grid_oracle_symmetric():
    # the d grid quantises each flow's share, so exact ties are not expected
    grid = brute_force_small(private(10, 10), 1000)
    assert grid.p[0] == pytest.approx(grid.p[1], abs=0.01)


def test_grid_oracle_rejects_three_flows():
    with pytest.raises(DomainError):
        brute_force_small(private(1, 2, 3))


def test_solver_option_validation():
    with pytest.raises(DomainError):
        SolverOptions(step_size=0)
    with pytest.raises(DomainError):
        SolverOptions(step_decay="linear")


@pytest.mark.parametrize("decay", ["constant", "sqrt"])
def test_other_step_rules_stay_feasible(decay):
    res = solve_allocation(private(5, 10), SolverOptions(step_decay=decay, outer_iters=3000))
    assert res.feasible
    assert np.all(np.diff(res.objective_trace) <= 1e-6)


# -- scenario files and the estimator ------------------------------------------------

def test_read_scenario(tmp_path):
    path = tmp_path / "flows.cfg"
    path.write_text("# id sigma psi private\n1, 5, 1, yes\n\n2 10 2 no  # public\n")
    flows = read_scenario(path)
    assert flows == [FlowSpec("1", 5.0, 1.0, True), FlowSpec("2", 10.0, 2.0, False)]


@pytest.mark.parametrize("body", ["1 5 1\n", "1 5 1 maybe\n", "# nothing\n", "1 x 1 yes\n", "1 -5 1 yes\n"])
def test_read_scenario_errors(tmp_path, body):
    path = tmp_path / "bad.cfg"
    path.write_text(body)
    with pytest.raises(DomainError):
        read_scenario(path)


def test_estimator_api():
    est = ProportionalFairAllocator(outer_iters=5000)
    assert clone(est).get_params()["outer_iters"] == 5000
    est.fit([[10, 1, 1], [10, 1, 0]])
    assert est.feasible_
    assert est.d_[1] == 0
    assert est.score() == pytest.approx(np.log(est.p_).sum())
    est.set_params(step_decay="sqrt")
    assert est.fit(private(5, 10)).result_.feasible


def test_estimator_rejects_bad_rows():
    with pytest.raises(DomainError):
        ProportionalFairAllocator().fit([[1, 2, 3, 4]])
