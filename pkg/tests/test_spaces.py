import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from antiplane.mesh import Mesh
from antiplane.spaces import (SpaceError, boundary_l2, build_space, estimate_trace_constant, seminorm_V,
                              trace_constant_eigenpair, trace_norm_G3)

from conftest import square


def test_free_dof_counts():
    m1 = square(1)
    V = build_space(m1, "V")
    assert V.n == 2 and set(m1.nodes[V.free_dofs][:, 1]) == {0.0}
    with pytest.raises(SpaceError):
        build_space(m1, "E")
    # bottom mid-edge node plus the interior centre node
    E = build_space(square(2), "E")
    assert sorted(map(tuple, E.mesh.nodes[E.free_dofs])) == [(0.5, 0.0), (0.5, 0.5)]


def test_seminorm_examples():
    H = build_space(square(4), "H1")
    assert seminorm_V(H.zeros()) == 0.0
    assert seminorm_V(H.interpolate(lambda x, y, t: x)) == pytest.approx(1.0, abs=1e-14)
    assert seminorm_V(H.interpolate(lambda x, y, t: x + 2 * y)) == pytest.approx(np.sqrt(5), abs=1e-14)


def test_trace_norm_examples():
    H = build_space(square(4), "H1")
    assert trace_norm_G3(H.interpolate(lambda x, y, t: np.ones_like(x))) == pytest.approx(1.0, abs=1e-14)
    assert trace_norm_G3(H.zeros()) == 0.0
    m1 = square(1)
    assert trace_norm_G3(build_space(m1, "H1").interpolate(lambda x, y, t: x)) == pytest.approx(
        np.sqrt(1 / 3), abs=1e-14)


def _independent_trace_constant(mesh):
    """Dense P1 assembly written out from scratch, then a generalized eigensolve."""
    n = mesh.n_nodes
    K = np.zeros((n, n))
    for tri in mesh.triangles:
        p = mesh.nodes[tri]
        T = np.array([p[1] - p[0], p[2] - p[0]]).T
        area = 0.5 * abs(np.linalg.det(T))
        G = np.linalg.inv(T).T @ np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        K[np.ix_(tri, tri)] += area * G.T @ G
    M = np.zeros((n, n))
    for (a, b), tag in zip(mesh.bedges, mesh.mech_tags):
        if tag == "G3":
            L = np.linalg.norm(mesh.nodes[a] - mesh.nodes[b])
            M[a, a] += L / 2
            M[b, b] += L / 2
    clamped = {i for (a, b), tag in zip(mesh.bedges, mesh.mech_tags) if tag == "G1" for i in (a, b)}
    free = [i for i in range(n) if i not in clamped]
    lam = sla.eigh(M[np.ix_(free, free)], K[np.ix_(free, free)], eigvals_only=True)
    return np.sqrt(lam[-1])


def test_trace_constant_against_dense_oracle():
    c4 = estimate_trace_constant(build_space(square(4), "V"), lumped=True)
    assert c4 == pytest.approx(_independent_trace_constant(square(4)), rel=1e-10)
    # the linear profile 1 - y attains the continuous constant 1 and is in P1
    assert c4 == pytest.approx(1.0, rel=1e-10)
    c8 = estimate_trace_constant(build_space(square(8), "V"), lumped=True)
    assert abs(c8 - c4) <= 0.1 * c4


def test_trace_constant_skewed_domain():
    m = square(6, tags="bottom=G3,top=G2:Ga,left=G1:Gb,right=G2:Gb", width=2.0)
    c = estimate_trace_constant(build_space(m, "V"), lumped=True)
    assert c == pytest.approx(_independent_trace_constant(m), rel=1e-10)


@pytest.mark.parametrize("lumped", [False, True])
def test_trace_inequality_random_fields(lumped, rng):
    V = build_space(square(6), "V")
    c, x = trace_constant_eigenpair(V, lumped=lumped)
    for _ in range(100):
        v = V.field(rng.standard_normal(V.n))
        assert trace_norm_G3(v) <= c * seminorm_V(v) * (1 + 1e-12)
    if not lumped:
        assert trace_norm_G3(x) == pytest.approx(c * seminorm_V(x), rel=1e-6)


def test_iterative_trace_constant_matches_dense():
    V = build_space(square(12), "V")
    dense = estimate_trace_constant(V, lumped=False)
    iterative = estimate_trace_constant(V, lumped=False, dense_threshold=10)
    assert iterative == pytest.approx(dense, rel=1e-6)


def test_no_contact_boundary():
    m = square(2)
    no_contact = Mesh(m.nodes, m.triangles, m.bedges,
                      tuple("G2" if t == "G3" else t for t in m.mech_tags),
                      tuple("Gb" if t is None else t for t in m.elec_tags))
    with pytest.raises(SpaceError, match="measure"):
        estimate_trace_constant(build_space(no_contact, "V"))


def test_nonfinite_field_rejected():
    V = build_space(square(2), "V")
    with pytest.raises(SpaceError):
        V.field(np.full(V.n, np.nan))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_affine_fields_exact(a, b, c):
    H = build_space(square(3), "H1")
    v = H.interpolate(lambda x, y, t: a + b * x + c * y)
    assert seminorm_V(v) == pytest.approx(np.hypot(b, c), abs=1e-12)
    # bottom edge: integral of (a + b x)^2 over [0, 1]
    exact = a * a + a * b + b * b / 3
    assert boundary_l2(H.mesh, "G3", v.full()) ** 2 == pytest.approx(exact, abs=1e-11)
