import numpy as np
import pytest
import sympy as sy

from antiplane.friction import FrictionLaw
from antiplane.verify import mms
from antiplane.verify.oracles import (OracleError, brute_force_oracle, closed_form_surrogates, compare_oracles,
                                      dense_problem, random_surrogates, uzawa_oracle)
from antiplane.verify.studies import (four_term_study, gate_study, lemma2_pair, lemma2_ratio,
                                      structural_invariants, temporal_self_convergence, tresca_reduction)
from antiplane.vi_solver import solve_frozen_bound

X, Y, T = sy.symbols("x y t", real=True)

EXACT = {
    "polynomial": (T * X * (1 - Y),
                   sy.Rational(1, 3) * T * X * (1 - Y) + T * X * (1 - Y ** 2),
                   (1 + T) * X * (1 - X) * (1 - Y)),
    "trigonometric": (T * sy.sin(sy.pi * X) * sy.sin(sy.pi * Y),
                      T * sy.cos(sy.pi * X) * sy.cos(sy.pi * Y / 2),
                      (1 + T) * sy.sin(sy.pi * X) * (1 - Y ** 2)),
}


def _symbolic_data(case):
    """Data of the strong problem derived symbolically from the exact fields."""
    c = case.coef
    u, phi, th = EXACT[case.name]
    grad = lambda f: sy.Matrix([sy.diff(f, X), sy.diff(f, Y)])  # noqa: E731
    div = lambda v: sy.diff(v[0], X) + sy.diff(v[1], Y)  # noqa: E731
    Me = sy.Matrix([sy.nsimplify(c.Me[0]), sy.nsimplify(c.Me[1])])
    K = sy.Matrix([[sy.nsimplify(k) for k in row] for row in c.K])
    al, mu, e, be, Ke = (sy.nsimplify(v) for v in (c.alpha, c.mu, c.e, c.beta, c.Ke))
    stress = al * grad(sy.diff(u, T)) + mu * grad(u) + e * grad(phi) - th * Me
    dfield = be * grad(phi) - e * grad(u)
    flux = K * grad(th)
    return dict(
        f0=-div(stress), stress=stress, q0=-div(dfield), dfield=dfield,
        p=sy.diff(th, T) - div(flux) + (Me.T * grad(sy.diff(u, T)))[0], flux=flux, theta=th, Ke=Ke,
    )


@pytest.mark.parametrize("case", mms.bundled_cases(), ids=lambda c: c.name)
def test_manufactured_data_symbolic(case):
    sym = _symbolic_data(case)
    lam = lambda expr: sy.lambdify((X, Y, T), expr, "numpy")  # noqa: E731
    rng = np.random.default_rng(7)
    x, y, t = rng.random(50), rng.random(50), rng.uniform(0, 1, 50)
    for name in ("f0", "q0", "p"):
        want = np.broadcast_to(lam(sym[name])(x, y, t), x.shape)
        got = getattr(case, name)(x, y, t)
        assert np.max(np.abs(got - want)) <= 1e-10 * max(1.0, np.max(np.abs(want))), name
    # boundary data on each side, with its outward normal
    s = rng.random(20)
    sides = {"bottom": (s, 0 * s, (0, -1)), "top": (s, 0 * s + 1, (0, 1)),
             "left": (0 * s, s, (-1, 0)), "right": (0 * s + 1, s, (1, 0))}
    for side, (bx, by, (nx, ny)) in sides.items():
        bt = rng.random(20)
        dot = lambda v: lam(v[0])(bx, by, bt) * nx + lam(v[1])(bx, by, bt) * ny  # noqa: E731
        np.testing.assert_allclose(case.traction(bx, by, bt), dot(sym["stress"]), atol=1e-10, err_msg=side)
        np.testing.assert_allclose(case.q2(bx, by, bt), dot(sym["dfield"]), atol=1e-10, err_msg=side)
        theta_R = lam(sym["theta"])(bx, by, bt) + dot(sym["flux"]) / float(sym["Ke"])
        np.testing.assert_allclose(case.theta_R(bx, by, bt), theta_R, atol=1e-10, err_msg=side)


@pytest.mark.parametrize("case", mms.bundled_cases(), ids=lambda c: c.name)
def test_manufactured_fields_respect_constraints(case):
    s = np.linspace(0, 1, 11)
    for t in (0.0, 0.7):
        # clamped top edge (u, phi, theta) and thermal zero on the sides
        for f in (case.u, case.phi, case.theta):
            np.testing.assert_allclose(f.value(s, 0 * s + 1, t), 0.0, atol=1e-14)
        for xs in (0.0, 1.0):
            np.testing.assert_allclose(case.theta.value(0 * s + xs, s, t), 0.0, atol=1e-14)
        # no charge flux through the contact edge (corners have no single normal)
        np.testing.assert_allclose(case.q2(s[1:-1], 0 * s[1:-1], t), 0.0, atol=1e-14)


def test_zero_case_zero_errors():
    rep = mms.run_mms(mms.zero_case(), levels=(2, 4, 8), T=0.2)
    assert all(e == 0.0 for errs in rep.errors.values() for e in errs)
    assert rep.passed


def test_fitted_rate_and_level_count():
    h = np.array([0.5, 0.25, 0.125])
    assert mms.fitted_rate(h, 3 * h ** 2) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        mms.run_mms(mms.zero_case(), levels=(2, 4))


def test_closed_form_surrogates():
    for case in closed_form_surrogates():
        cmp = compare_oracles(case, tol=1e-10)
        assert cmp.passed, case.name
        assert cmp.ssn_vs_expected <= 1e-9


def test_uzawa_frictionless_and_surrogate():
    prob = dense_problem([[2.0, -1.0], [-1.0, 3.0]], [1.0, -2.0], [0], [1.0], FrictionLaw.tresca(0.0))
    uz = uzawa_oracle(prob, np.zeros(1), tol=1e-12)
    np.testing.assert_allclose(uz.w, np.linalg.solve([[2.0, -1.0], [-1.0, 3.0]], [-1.0, 2.0]), atol=1e-12)
    soft = dense_problem([[2.0, 0.0], [0.0, 2.0]], [-3.0, 0.0], [0], [1.0], FrictionLaw.tresca(1.0))
    np.testing.assert_allclose(uzawa_oracle(soft, np.ones(1)).w, [1.0, 0.0], atol=1e-10)


def test_brute_force_limits():
    big = dense_problem(np.eye(4), np.ones(4), [0], [1.0], FrictionLaw.tresca(1.0))
    with pytest.raises(ValueError):
        brute_force_oracle(big, np.ones(1))
    prob = dense_problem([[2.0]], [-30.0], [0], [1.0], FrictionLaw.tresca(1.0))
    with pytest.raises(OracleError, match="boundary"):
        brute_force_oracle(prob, np.ones(1), half_width=1.0)
    free3 = dense_problem(np.diag([1.0, 2.0, 4.0]), [1.0, -1.0, 2.0], [0], [1.0], FrictionLaw.tresca(0.0))
    np.testing.assert_allclose(brute_force_oracle(free3, np.zeros(1)).w, [-1.0, 0.5, -0.5], atol=1e-11)


def test_random_surrogates_shape():
    cases = random_surrogates(5, seed=3)
    assert all(5 <= c.problem.n <= 30 and len(c.problem.contact) == 5 for c in cases)
    for c in cases:
        assert compare_oracles(c).passed
        sol = solve_frozen_bound(c.problem, c.g)
        assert sol.residual <= 1e-10 * max(1.0, c.problem.dual_norm(c.problem.linear))


def test_small_studies():
    assert structural_invariants(nx=6, samples=50).passed
    assert four_term_study(nx=6, samples=200).passed
    rep = gate_study(fractions=(0.0, 0.5), families=("affine",), instances=1, nx=6)
    assert rep.passed
    assert all(p.outer_iterations == 1 for p in rep.points if p.L_r == 0.0)
    assert tresca_reduction(instances=1, nx=6).passed


def test_lemma2_identical_data_gives_zero():
    d1, _ = lemma2_pair()
    ratio, lhs, rhs = lemma2_ratio(6, (d1, d1), N=4)
    assert ratio == 0.0 and max(lhs) == 0.0 and max(rhs) == 0.0
    ratio, lhs, _ = lemma2_ratio(6, lemma2_pair(), N=4)
    assert np.isfinite(ratio) and ratio > 0


def test_temporal_self_convergence():
    diffs, orders = temporal_self_convergence(steps=(8, 16, 32), nx=4)
    assert all(o >= 0.9 for o in orders)
