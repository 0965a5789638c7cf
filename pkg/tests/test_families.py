"""Built-in model families and the mean-variance closed form."""

import numpy as np
import pytest

from markeq import (ExpUtilityParams, LQParams, MeanVarianceParams, ModelError,
                    discretize, exp_utility_model, lq_model, mv_chain_model,
                    mv_closed_form, mv_model, nonlinear_lq_variant, solve,
                    validate_assumptions)


# ---------------------------------------------------------------------------
# mean-variance closed form
# ---------------------------------------------------------------------------

def test_mv_closed_form_spot_value():
    # R = 1 makes the single control gamma*mu/(2*sigma2) = 1 exactly
    p = MeanVarianceParams(T=2, R=1.0, mu=1.0, sigma2=1.0, gamma=2.0)
    cf = mv_closed_form(p)
    assert cf.controls.shape == (1,)
    assert cf.controls[0] == pytest.approx(1.0, abs=1e-12)
    assert cf.quad_a[0] == pytest.approx(1.0)
    assert cf.quad_b[0] == pytest.approx(-2.0)


def test_mv_closed_form_recursion_shape():
    p = MeanVarianceParams(T=6)
    cf = mv_closed_form(p)
    for t in range(p.T - 1):
        e = p.T - 2 - t
        assert cf.quad_a[t] == pytest.approx(p.R ** (2 * e) * p.sigma2)
        assert cf.controls[t] == pytest.approx(
            p.gamma * p.mu / (2.0 * p.sigma2 * p.R ** e))
    # earlier selves discount the future return, so invest more
    assert np.all(np.diff(cf.controls) > 0)


def test_mv_objective_quadratic_in_u():
    p = MeanVarianceParams(T=4)
    cf = mv_closed_form(p)
    for t in range(p.T - 1):
        us = np.linspace(-3.0, 8.0, 7)
        vals = cf.objective(t, 0.3, us)
        coef = np.polyfit(us, vals, 2)
        assert coef[0] == pytest.approx(cf.quad_a[t], rel=1e-9)
        assert coef[1] == pytest.approx(cf.quad_b[t], rel=1e-9)
        # stationary point matches the tabulated control
        assert -coef[1] / (2 * coef[0]) == pytest.approx(cf.controls[t])


def test_mv_solver_controls_state_independent():
    p = MeanVarianceParams(T=3)
    model = mv_model(p, n_x=161, n_u=121)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    cf = mv_closed_form(p)
    for t in range(p.T - 1):
        u = solution.policy.controls[t]
        assert np.ptp(u) <= 1e-6 * (1.0 + abs(cf.controls[t]))
        assert abs(float(np.median(u)) - cf.controls[t]) < 1e-6


def test_mv_value_quadratic_in_state():
    p = MeanVarianceParams(T=3)
    model = mv_model(p, n_x=161, n_u=121)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    x = model.grids[0]
    v = solution.values[0]
    coef = np.polyfit(x, v, 2)
    resid = v - np.polyval(coef, x)
    scale = float(np.max(np.abs(v))) + 1.0
    assert np.max(np.abs(resid)) <= 1e-6 * scale


def test_mv_chain_certifies_against_its_own_dynamics():
    # the chain variant's equilibrium is exact for the chain itself (controls
    # live on nodes), even though its moments differ from the continuous model
    from markeq import verify_equilibrium
    p = MeanVarianceParams(T=4)
    model = mv_chain_model(p)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    report = verify_equilibrium(model, dk, solution, tol=1e-9)
    assert report.certified
    assert report.worst_gap <= 1e-9
    # controls still land within a node step of the continuous closed form
    cf = mv_closed_form(p)
    for t in range(p.T - 1):
        step = float(np.diff(dk.controls[t][0]).max())
        med = float(np.median(solution.policy.controls[t]))
        assert abs(med - cf.controls[t]) <= 8.0 * step


def test_mv_bad_params():
    with pytest.raises(ModelError):
        MeanVarianceParams(sigma2=0.0)
    with pytest.raises(ModelError):
        MeanVarianceParams(R=0.9)
    with pytest.raises(ModelError):
        MeanVarianceParams(gamma=-1.0)


# ---------------------------------------------------------------------------
# LQ family
# ---------------------------------------------------------------------------

def test_lq_zero_gain_gives_zero_policy():
    # b = 0: controls cannot move the state, so only u^2 matters
    model = lq_model(LQParams(T=3, b=0.0), n_x=61, n_u=41)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    for t in range(model.T - 1):
        assert np.max(np.abs(solution.policy.controls[t])) < 1e-9


def test_lq_policy_affine_in_state():
    model = lq_model(LQParams(T=3, a=0.5), n_x=241, n_u=161)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    for t in range(model.T - 1):
        x = model.grids[t]
        u = solution.policy.controls[t]
        # fit on nodes whose optimizer is interior to the control window
        mask = (np.abs(u) < 4.5)
        coef = np.polyfit(x[mask], u[mask], 1)
        resid = u[mask] - np.polyval(coef, x[mask])
        assert np.max(np.abs(resid)) <= 1e-5 * (1.0 + np.max(np.abs(u)))


def test_lq_assumptions_pass():
    model = lq_model(LQParams(T=3))
    report = validate_assumptions(model)
    assert report.nonnegativity == "pass"
    assert report.mixer_monotone == "pass"
    assert report.compact_controls == "pass"


def test_lq_widening_grids_cover_dynamics():
    p = LQParams(T=4, a=1.5)
    model = lq_model(p, n_x=61, n_u=41)
    for t in range(p.T - 1):
        g, gn = model.grids[t], model.grids[t + 1]
        # one step from any node at max |control| plus 5 sigma stays covered
        reach = p.a * np.abs(g).max() + abs(p.b) * 5.0 + 5.0 * p.sigma
        assert gn[-1] >= reach - 1e-9 and gn[0] <= -reach + 1e-9


def test_nonlinear_lq_stat_nonnegative():
    model = nonlinear_lq_variant(LQParams(T=3), n_x=61, n_u=41)
    xs = np.linspace(-8, 8, 101)
    assert np.all(model.costs.terminal_stat(xs) >= 0)
    report = validate_assumptions(model)
    assert report.mixer_monotone == "pass"
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    # pushing wealth down lowers E[max(x_T, 0)], so optimal u <= 0 for x > 0
    x = model.grids[0]
    assert np.all(solution.policy.controls[0][x > 1.0] <= 1e-9)


# ---------------------------------------------------------------------------
# exponential utility with non-exponential discounting
# ---------------------------------------------------------------------------

def test_expu_default_solves_and_certifies():
    from markeq import verify_equilibrium
    model = exp_utility_model(ExpUtilityParams(T=3), n_x=81, n_u=41)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    report = verify_equilibrium(model, dk, solution, tol=1e-6)
    assert report.certified


def test_expu_constant_discount_is_time_consistent():
    # phi constant: exponential discounting degenerates to none; the naive
    # and equilibrium policies coincide
    from markeq import solve_naive
    p = ExpUtilityParams(T=3, phi=lambda tau: np.ones_like(np.asarray(tau, float)))
    model = exp_utility_model(p, n_x=81, n_u=41)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    naive = solve_naive(model, dk)
    for t in range(model.T - 1):
        assert np.max(np.abs(naive.controls[t]
                             - solution.policy.controls[t])) <= 1e-7


def test_expu_boundary_controls_reported_not_fatal():
    # tiny risk aversion pushes the position to the upper bound everywhere
    p = ExpUtilityParams(T=3, gamma=0.05, u_hi=1.0)
    model = exp_utility_model(p, n_x=81, n_u=41)
    dk = discretize(model.kernel, model.grids, model.constraints)
    solution = solve(model, dk)
    assert solution.diagnostics.boundary_hits
    assert np.all(np.abs(np.concatenate(solution.policy.controls)
                         - p.u_hi) < 1e-12)


def test_expu_bad_params():
    with pytest.raises(ModelError):
        ExpUtilityParams(gamma=0.0)
    with pytest.raises(ModelError):
        ExpUtilityParams(u_lo=0.0)
    p = ExpUtilityParams(phi=lambda tau: -np.ones_like(np.asarray(tau, float)))
    with pytest.raises(ModelError):
        p.discount(1.0)
