"""Backward induction: auxiliaries, Bellman step, identities, level sets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markeq import (ControlConstraint, Costs, GaussianNoise, LQParams,
                    MeanVarianceParams, Model, Policy, RefinementPolicy,
                    SolveOptions, bellman_step, build_aux, build_model,
                    discretize, eval_objective_exact, golden_section,
                    levelset_probe, lq_model, mv_chain_model, mv_closed_form,
                    mv_model, objective_L, solve, value_identity_check)
from markeq.kernels import AdditiveNoise, policy_matrix

from _oracles import brute_force_equilibrium, chain_config, path_objective


def _pure_control_cost_model(T=3, n_x=11, n_u=21):
    """C = u^2, F = G = H = 0: minimizer is u* = 0 everywhere."""
    kernel = AdditiveNoise(
        drift=lambda t, x, u: np.asarray(x, dtype=float) + 0.0 * np.asarray(u),
        scale=lambda t, x, u: np.full(np.broadcast(np.asarray(x),
                                                   np.asarray(u)).shape, 1.0),
        noise=GaussianNoise(), sigma_floor=0.5)
    zeros = lambda *a: np.zeros(np.broadcast(*(np.asarray(v) for v in a)).shape)
    costs = Costs(running=lambda t, s, y, x, u: np.square(np.asarray(u, dtype=float))
                  + zeros(s, y, x),
                  terminal=lambda s, y, xT: zeros(s, y, xT),
                  terminal_stat=lambda xT: np.zeros_like(np.asarray(xT, dtype=float)),
                  mixer=lambda s, y, h: zeros(s, y, h))
    grids = [np.linspace(-6, 6, n_x) for _ in range(T)]
    cons = [ControlConstraint.interval(-5, 5, n_u) for _ in range(T - 1)]
    return Model(T=T, grids=grids, constraints=cons, kernel=kernel, costs=costs)


# ---------------------------------------------------------------------------
# golden_section
# ---------------------------------------------------------------------------

def test_golden_section_quadratic():
    x, fx = golden_section(lambda u: (u - 0.3) ** 2 + 1.0, -2.0, 2.0)
    assert abs(x - 0.3) < 1e-8
    assert abs(fx - 1.0) < 1e-14


@settings(max_examples=40, deadline=None)
@given(c=st.floats(-1.5, 1.5), a=st.floats(0.01, 10.0))
def test_golden_section_random_quadratics(c, a):
    x, _ = golden_section(lambda u: a * (u - c) ** 2, -2.0, 2.0, tol=1e-10)
    assert abs(x - c) < 1e-7


def test_golden_section_boundary_minimum():
    x, _ = golden_section(lambda u: u, 0.0, 1.0)
    assert x < 1e-6


# ---------------------------------------------------------------------------
# build_aux
# ---------------------------------------------------------------------------

def test_aux_terminal_time_degenerates():
    model = _pure_control_cost_model()
    dk = discretize(model.kernel, model.grids, model.constraints)
    aux = build_aux(model, dk, None, model.T - 2)
    np.testing.assert_array_equal(
        aux.h_next, model.costs.terminal_stat(model.grids[-1]))


def test_aux_chain_flow_product(chain_small):
    model, dk, _ = chain_small
    tail = Policy(controls=[None, np.array([-1.0, 1.0])])
    aux = build_aux(model, dk, tail, 0)
    # M[1->2] is the one-step matrix at t=1 under the tail controls
    Q = np.stack([dk.weights[1][0, 0], dk.weights[1][1, 1]])
    np.testing.assert_allclose(aux.flows.to_time(2), Q, atol=1e-15)
    np.testing.assert_allclose(
        aux.h_next, Q @ model.costs.terminal_stat(model.grids[-1]), atol=1e-15)


def test_aux_mean_variance_h_is_affine():
    p = MeanVarianceParams(T=4)
    model = mv_model(p, n_x=121, n_u=81)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    cf = mv_closed_form(p)
    for t in range(p.T - 1):
        aux = build_aux(model, dk, solution.policy, t)
        e = p.T - 2 - t
        expect = p.R ** e * model.grids[t + 1] + cf.h0[t]
        assert np.max(np.abs(aux.h_next - expect)) < 1e-8


def test_incremental_flows_match_scratch(chain_small):
    model, dk, _ = chain_small
    solution = solve(model, dk)
    for t in range(model.T - 1):
        aux_scratch = build_aux(model, dk, solution.policy, t)
        # rebuild flows manually by successive products
        mats = [np.eye(model.grids[t + 1].size)]
        for k in range(t + 1, model.T - 1):
            mats.append(mats[-1] @ policy_matrix(dk, k, solution.policy.controls[k]))
        for k in range(t + 1, model.T):
            np.testing.assert_allclose(aux_scratch.flows.to_time(k),
                                       mats[k - (t + 1)], atol=1e-12)


# ---------------------------------------------------------------------------
# objective_L / bellman_step
# ---------------------------------------------------------------------------

def test_objective_pure_control_cost():
    model = _pure_control_cost_model()
    dk = discretize(model.kernel, model.grids, model.constraints)
    tail = Policy(controls=[None, np.zeros(model.grids[1].size)])
    aux = build_aux(model, dk, tail, 0)
    for u in (-2.0, 0.0, 1.5):
        assert objective_L(model, dk, aux, 0, 5, u) == pytest.approx(u * u, abs=1e-12)


def test_objective_mean_variance_one_step_moments():
    p = MeanVarianceParams(T=2)
    model = mv_model(p, n_x=201, n_u=61)
    dk = discretize(model.kernel, model.grids, model.constraints)
    aux = build_aux(model, dk, None, 0)
    i = 100
    x = float(model.grids[0][i])

    def direct(u):
        mean = p.R * x + p.mu * u
        return (u * u * p.sigma2 + mean * mean) - p.gamma * mean - mean * mean

    # The grid carries a constant interpolation offset on E[x'^2] that
    # cancels in differences; compare objective increments.
    base_L = objective_L(model, dk, aux, 0, i, 0.5)
    for u in (1.1, 1.7, 3.1):
        inc = objective_L(model, dk, aux, 0, i, u) - base_L
        assert abs(inc - (direct(u) - direct(0.5))) < 1e-8


def test_objective_substitution_identity(chain_small):
    # L(t, i, u) equals J_t(x_i; (u, tail)) of the one-step-deviated policy.
    model, dk, _ = chain_small
    solution = solve(model, dk)
    for t in range(model.T - 1):
        aux = build_aux(model, dk, solution.policy, t)
        for i in range(model.grids[t].size):
            for u in dk.controls[t][i]:
                dev = [c.copy() if c is not None else None
                       for c in solution.policy.controls]
                dev[t] = dev[t].copy()
                dev[t][i] = u
                for k in range(t):
                    dev[k] = None
                j = eval_objective_exact(model, dk, Policy(controls=dev), t, i)
                assert abs(objective_L(model, dk, aux, t, i, float(u)) - j) < 1e-9


def test_bellman_step_pure_quadratic():
    model = _pure_control_cost_model()
    dk = discretize(model.kernel, model.grids, model.constraints)
    tail = Policy(controls=[None, np.zeros(model.grids[1].size)])
    aux = build_aux(model, dk, tail, 0)
    controls, values, diag = bellman_step(model, dk, aux, 0,
                                          RefinementPolicy(enabled=True))
    np.testing.assert_allclose(controls, 0.0, atol=1e-9)
    np.testing.assert_allclose(values, 0.0, atol=1e-12)


def test_bellman_step_mv_last_period_unit_control():
    p = MeanVarianceParams(R=1.0, mu=1.0, sigma2=1.0, gamma=2.0, T=2)
    model = mv_model(p, x_lo=-2, x_hi=2, n_x=241, u_lo=0.0, u_hi=3.0, n_u=61)
    dk = discretize(model.kernel, model.grids, model.constraints)
    aux = build_aux(model, dk, None, 0)
    controls, values, _ = bellman_step(model, dk, aux, 0,
                                       RefinementPolicy(enabled=True))
    np.testing.assert_allclose(controls, 1.0, atol=1e-7)


def test_bellman_grid_argmin_property(chain_small):
    model, dk, _ = chain_small
    solution = solve(model, dk)
    for t in range(model.T - 1):
        aux = build_aux(model, dk, solution.policy, t)
        for i in range(model.grids[t].size):
            for u in dk.controls[t][i]:
                assert objective_L(model, dk, aux, t, i, float(u)) \
                    >= solution.values[t][i] - 1e-12


def test_chain_best_response_matches_brute_force(rng):
    config = chain_config(rng, T=3, n_states=2, n_controls=2, mixer="square")
    model = build_model(config)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    oracle_policy, _ = brute_force_equilibrium(model, dk)
    for t in range(model.T - 1):
        np.testing.assert_array_equal(solution.policy.controls[t],
                                      oracle_policy.controls[t])


# ---------------------------------------------------------------------------
# solve / value identity
# ---------------------------------------------------------------------------

def test_solve_t2_is_single_step():
    model = _pure_control_cost_model(T=2)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    assert len(solution.policy.controls) == 1
    np.testing.assert_allclose(solution.policy.controls[0], 0.0, atol=1e-9)


def test_solve_deterministic_repeatability(lq_small):
    model, dk, solution = lq_small
    again = solve(model, dk)
    for t in range(model.T - 1):
        np.testing.assert_array_equal(solution.policy.controls[t],
                                      again.policy.controls[t])
        np.testing.assert_array_equal(solution.values[t], again.values[t])


def test_value_identity_chain(chain_small):
    model, dk, _ = chain_small
    solution = solve(model, dk)
    for t in range(model.T - 2):
        assert value_identity_check(model, dk, solution, t) <= 1e-10


def test_value_identity_quadrature(lq_small):
    model, dk, solution = lq_small
    for t in range(model.T - 2):
        assert value_identity_check(model, dk, solution, t) <= 1e-8


def test_value_identity_rejects_out_of_range(lq_small):
    model, dk, solution = lq_small
    from markeq import SolverError
    with pytest.raises(SolverError):
        value_identity_check(model, dk, solution, model.T - 2)


# ---------------------------------------------------------------------------
# levelset_probe
# ---------------------------------------------------------------------------

def test_levelset_pure_quadratic_interior():
    model = _pure_control_cost_model()
    dk = discretize(model.kernel, model.grids, model.constraints)
    tail = Policy(controls=[None, np.zeros(model.grids[1].size)])
    aux = build_aux(model, dk, tail, 0)
    report = levelset_probe(model, dk, aux, 0, 5, r=1.0)
    assert not report.suspect_non_inf_compact
    assert len(report.intervals) == 1
    lo, hi = report.intervals[0]
    assert lo == pytest.approx(-1.0, abs=0.02)
    assert hi == pytest.approx(1.0, abs=0.02)


def test_levelset_monotone_cost_escapes_window():
    # C = u on [0, 5]: the sublevel set runs past any window edge.
    kernel = AdditiveNoise(
        drift=lambda t, x, u: np.asarray(x, dtype=float) + 0.0 * np.asarray(u),
        scale=lambda t, x, u: np.full(np.broadcast(np.asarray(x),
                                                   np.asarray(u)).shape, 1.0),
        noise=GaussianNoise(), sigma_floor=0.5)
    zeros = lambda *a: np.zeros(np.broadcast(*(np.asarray(v) for v in a)).shape)
    costs = Costs(running=lambda t, s, y, x, u: np.asarray(u, dtype=float)
                  + zeros(s, y, x),
                  terminal=lambda s, y, xT: zeros(s, y, xT),
                  terminal_stat=lambda xT: np.zeros_like(np.asarray(xT, dtype=float)),
                  mixer=lambda s, y, h: zeros(s, y, h))
    grids = [np.linspace(-6, 6, 11) for _ in range(2)]
    cons = [ControlConstraint.interval(0.0, 5.0, 11)]
    model = Model(T=2, grids=grids, constraints=cons, kernel=kernel, costs=costs)
    dk = discretize(model.kernel, model.grids, model.constraints)
    aux = build_aux(model, dk, None, 0)
    report = levelset_probe(model, dk, aux, 0, 5, r=10.0, window=(0.0, 7.0))
    assert report.suspect_non_inf_compact
