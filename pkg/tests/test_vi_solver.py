import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from antiplane.friction import FrictionLaw
from antiplane.verify.oracles import brute_force_oracle, dense_problem
from antiplane.verify.studies import gate_problem
from antiplane.vi_solver import (GateViolation, MatrixOperator, NonEllipticError, SchurOperator, SolverConfig,
                                 StepProblem, check_gate, kkt_residual, solve_frozen_bound, solve_step)


def _quiet(fn, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fn(*a, **k)


@pytest.fixture(scope="module")
def fem_problem():
    return gate_problem(8, 0.0, "affine", 0)[1]


def test_gate_examples():
    rep = check_gate(4.0, 2.0, 0.5)
    assert rep.ok and rep.Z0 == 1.0 and rep.margin == 0.5
    assert check_gate(1e-6, 1e3, 0.0).ok
    assert not check_gate(4.0, 2.0, 1.0).ok


def test_soft_threshold_surrogate():
    prob = dense_problem([[2.0, 0.0], [0.0, 2.0]], [-3.0, 0.0], [0], [1.0], FrictionLaw.tresca(1.0))
    sol = solve_frozen_bound(prob, np.array([1.0]))
    np.testing.assert_allclose(sol.w, [1.0, 0.0], atol=1e-12)
    bf = brute_force_oracle(prob, np.array([1.0]), resolution=1e-12)
    np.testing.assert_allclose(bf.w, [1.0, 0.0], atol=1e-11)


def test_frictionless_is_linear_solve(fem_problem):
    g = np.zeros(len(fem_problem.contact))
    sol = solve_frozen_bound(fem_problem, g, tol=1e-12)
    w = np.linalg.solve(fem_problem.operator.dense(), -fem_problem.linear)
    assert fem_problem.norm(sol.w - w) <= 1e-12 * fem_problem.norm(w)
    assert sol.residual <= 1e-12 * max(1.0, fem_problem.dual_norm(fem_problem.linear))


def test_zero_load_zero_velocity(fem_problem):
    from dataclasses import replace
    prob = replace(fem_problem, linear=np.zeros(fem_problem.n))
    sol = solve_step(prob)
    assert np.all(sol.w == 0.0)


def test_constant_bound_one_correction(fem_problem):
    sol = solve_step(fem_problem, tol=1e-10)
    assert sol.outer_iterations == 1
    assert np.any(~sol.stick) and np.any(sol.stick)


def test_vi_inequality_sampled():
    _, prob = gate_problem(8, 0.5, "affine", 1)
    sol = _quiet(solve_step, prob, tol=1e-11)
    rng = np.random.default_rng(5)
    B = prob.operator
    cd, W = prob.contact.dofs, prob.contact.weights
    g = prob.bounds_at(sol.w)
    w = sol.w
    jw = lambda v: np.sum(W * g * np.abs(v[cd]))
    grad = B.matvec(w) + prob.linear
    tol = 1e-8
    for k in range(200):
        v = w + rng.standard_normal(prob.n) * 10.0 ** rng.uniform(-4, 1)
        if k % 4 == 0:
            v[cd] = 0.0
        val = grad @ (v - w) + jw(v) - jw(w)
        assert val >= -tol * (1 + prob.norm(v))


def test_contraction_and_uniqueness():
    for family in ("affine", "exponential", "strengthening"):
        stepper, prob = gate_problem(8, 0.5 * 1.0, family, 2)
        Z0 = prob.alpha_star / prob.trace_constant ** 2
        _, prob = gate_problem(8, 0.5 * Z0, family, 2)
        a = _quiet(solve_step, prob, tol=1e-10)
        b = _quiet(solve_step, prob, w_init=np.full(prob.n, 3.0), tol=1e-10)
        bound = prob.trace_constant ** 2 * prob.law.lipschitz / prob.alpha_star
        assert max(a.contraction_ratios, default=0.0) <= bound + 0.1
        assert prob.norm(a.w - b.w) <= 10 * 1e-10 * max(1.0, prob.norm(a.w))


def test_anderson_matches_plain():
    _, prob = gate_problem(8, 0.8, "exponential", 0)
    plain = _quiet(solve_step, prob, tol=1e-11)
    acc = _quiet(solve_step, prob, tol=1e-11, acceleration="anderson")
    assert prob.norm(plain.w - acc.w) <= 1e-9 * max(1.0, prob.norm(plain.w))


def test_gate_abort():
    _, prob = gate_problem(6, 5.0, "affine", 0)
    with pytest.raises(GateViolation, match="Z0"):
        solve_step(prob, gate_policy="abort")
    with pytest.warns(RuntimeWarning, match="Z0"):
        try:
            solve_step(prob, gate_policy="warn", max_outer=3)
        except Exception:
            pass


def test_non_elliptic_detected():
    B = np.array([[1.0, 0.0], [0.0, -1.0]])
    prob = StepProblem(MatrixOperator(B), np.array([-1.0, 1.0]), dense_problem(
        np.eye(2), [0, 0], [0], [1.0], FrictionLaw.tresca(0.1)).contact, FrictionLaw.tresca(0.1), 1.0, 1.0)
    with pytest.raises(NonEllipticError, match="not elliptic"):
        solve_frozen_bound(prob, np.array([0.1]))


def test_negative_bound_rejected(fem_problem):
    with pytest.raises(ValueError):
        solve_frozen_bound(fem_problem, -np.ones(len(fem_problem.contact)))


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(newton_tol=-1.0), dict(eps_schedule=(1e-2, 0.0)),
                                dict(max_outer=0), dict(gate_policy="ignore"), dict(acceleration="magic")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_schur_operator_paths():
    rng = np.random.default_rng(2)
    n, m = 30, 20
    Q = rng.standard_normal((n, n))
    K = sp.csr_matrix(Q @ Q.T + n * np.eye(n))
    C = sp.csr_matrix(rng.standard_normal((m, n)))
    R = rng.standard_normal((m, m))
    D = sp.csr_matrix(R @ R.T + m * np.eye(m))
    dense = K.toarray() + 0.3 * C.T.toarray() @ np.linalg.solve(D.toarray(), C.toarray())
    x = rng.standard_normal(n)
    for thr in (None, 5):
        op = SchurOperator(K, C, D, 0.3, iterative_threshold=thr)
        np.testing.assert_allclose(op.matvec(x), dense @ x, rtol=1e-12)
        np.testing.assert_allclose(op.solve(x), np.linalg.solve(dense, x), rtol=1e-9)
        np.testing.assert_allclose(op.dense(), dense, rtol=1e-12)
        assert np.all(op.diagonal() <= np.diag(dense)) and np.all(op.diagonal() > 0)


def test_iterative_path_agrees(fem_problem):
    from dataclasses import replace
    op = fem_problem.operator
    it = SchurOperator(op.K, op.C, op.D, op.s, iterative_threshold=5)
    a = solve_step(fem_problem, tol=1e-10)
    b = solve_step(replace(fem_problem, operator=it), tol=1e-10)
    assert fem_problem.norm(a.w - b.w) <= 1e-8 * max(1.0, fem_problem.norm(a.w))


def test_kkt_traction_within_bounds(fem_problem):
    sol = solve_step(fem_problem, tol=1e-10)
    g = fem_problem.bounds_at(sol.w)
    W = fem_problem.contact.weights
    assert np.all(np.abs(sol.traction) <= W * g * (1 + 1e-9) + 1e-12)
    res, _, stick = kkt_residual(fem_problem, g, sol.w)
    assert res == pytest.approx(sol.residual)
    slip = ~stick
    wc = sol.w[fem_problem.contact.dofs]
    # slipping nodes carry the full bound opposing the motion
    np.testing.assert_allclose(sol.traction[slip], -np.sign(wc[slip]) * W[slip] * g[slip], rtol=1e-8)


@settings(max_examples=60, deadline=None)
@given(b=st.floats(0.1, 10), c=st.floats(-10, 10), W=st.floats(0.1, 2), g=st.floats(0, 5))
def test_scalar_soft_threshold(b, c, W, g):
    prob = dense_problem([[b]], [c], [0], [W], FrictionLaw.tresca(g))
    sol = solve_frozen_bound(prob, np.array([g]), tol=1e-12)
    exact = -np.sign(c) * max(abs(c) - W * g, 0.0) / b
    assert abs(sol.w[0] - exact) <= 1e-10 * max(1.0, abs(exact))
