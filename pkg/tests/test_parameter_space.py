import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from truncexp.errors import InvalidRadiusError
from truncexp.parameter_space import (ConstraintSpec, SliceConstraint, check_norm_domination,
                                      check_parameter, dual_norm, matrix_norm,
                                      norm_domination_ratio, project_constraint_set,
                                      project_l1_vector, project_l11_ball, project_nuclear_ball,
                                      slice_norm, tensor_norm)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
matrices = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda s: arrays(np.float64, s, elements=finite))
PROJ = {"l11": project_l11_ball, "nuclear": project_nuclear_ball}


# -- norms -------------------------------------------------------------------

def test_slice_norms():
    M = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert slice_norm(M, "l11") == 6.0
    assert slice_norm(np.diag([3.0, 1.0]), "nuclear") == pytest.approx(4.0)
    assert slice_norm(np.zeros((2, 2)), "nuclear") == 0.0


def test_dual_norms():
    M = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert dual_norm(M, "l11") == 3.0
    assert dual_norm(np.diag([3.0, 1.0]), "nuclear") == pytest.approx(3.0)
    for kind in ("l11", "nuclear"):
        assert dual_norm(np.zeros((2, 3)), kind) == 0.0


def test_tensor_norm():
    assert tensor_norm(np.zeros((2, 2, 1))) == 0.0
    assert tensor_norm(np.array([[[3.0]]])) == 3.0
    assert tensor_norm(np.array([[[3.0], [4.0]]])) == 5.0


@settings(max_examples=60, deadline=None)
@given(M=matrices, seed=st.integers(0, 2**31))
def test_duality_inequality(M, seed):
    rng = np.random.default_rng(seed)
    for kind in ("l11", "nuclear"):
        for _ in range(10):
            N = rng.standard_normal(M.shape)
            N /= max(slice_norm(N, kind), 1e-300)
            assert np.sum(M * N) <= dual_norm(M, kind) + 1e-9


# -- projections -------------------------------------------------------------

def test_l11_examples():
    np.testing.assert_allclose(project_l11_ball(np.array([[3.0, 1.0]]), 2), [[2.0, 0.0]])
    np.testing.assert_allclose(project_l11_ball(np.array([[0.5, 0.5]]), 2), [[0.5, 0.5]])
    np.testing.assert_allclose(project_l11_ball(np.array([[-3.0, -1.0]]), 2), [[-2.0, 0.0]])


def test_l11_example_matches_grid_search():
    g = np.arange(-2, 2.0001, 0.01)
    A, B = np.meshgrid(g, g, indexing="ij")
    ok = np.abs(A) + np.abs(B) <= 2 + 1e-12
    dist = (A - 3) ** 2 + (B - 1) ** 2
    dist[~ok] = np.inf
    i = np.unravel_index(np.argmin(dist), dist.shape)
    np.testing.assert_allclose([A[i], B[i]], [2.0, 0.0], atol=1e-9)


def test_nuclear_examples():
    np.testing.assert_allclose(project_nuclear_ball(np.diag([3.0, 1.0]), 2), np.diag([2.0, 0.0]),
                               atol=1e-12)
    M = np.array([[0.3, -0.2], [0.1, 0.4]])
    np.testing.assert_array_equal(project_nuclear_ball(M, 5.0), M)
    np.testing.assert_array_equal(project_nuclear_ball(np.zeros((2, 3)), 1.0), np.zeros((2, 3)))


def test_nuclear_example_matches_grid_search():
    g = np.arange(-2, 2.0001, 0.01)
    A, B = np.meshgrid(g, g, indexing="ij")
    dist = (A - 3) ** 2 + (B - 1) ** 2
    dist[np.abs(A) + np.abs(B) > 2 + 1e-12] = np.inf
    i = np.unravel_index(np.argmin(dist), dist.shape)
    np.testing.assert_allclose([A[i], B[i]], [2.0, 0.0], atol=1e-9)


@pytest.mark.parametrize("proj", [project_l11_ball, project_nuclear_ball, project_l1_vector])
def test_nonpositive_radius_rejected(proj):
    with pytest.raises(InvalidRadiusError):
        proj(np.ones((2, 2)), 0.0)
    with pytest.raises(InvalidRadiusError):
        SliceConstraint("l11", -1.0)


def test_constraint_set_composition():
    theta = np.zeros((2, 2, 2))
    theta[:1, :, 0] = [[3.0, 1.0]]
    theta[:, :, 1] = np.diag([3.0, 1.0])
    theta[1, :, 0] = 0.0
    spec = ConstraintSpec.from_list([{"norm": "l11", "radius": 2}, {"norm": "nuclear", "radius": 2}])
    P = project_constraint_set(theta, spec)
    np.testing.assert_allclose(P[0, :, 0], [2.0, 0.0])
    np.testing.assert_allclose(P[:, :, 1], np.diag([2.0, 0.0]), atol=1e-12)


def test_constraint_set_identity_when_feasible(rng):
    spec = ConstraintSpec((("l11", 5.0), ("nuclear", 5.0)))
    theta = rng.uniform(-0.3, 0.3, (2, 3, 2))
    np.testing.assert_array_equal(project_constraint_set(theta, spec), theta)


def test_projection_idempotent(rng):
    spec = ConstraintSpec((("l11", 1.0), ("nuclear", 1.5)))
    for _ in range(100):
        P = project_constraint_set(rng.standard_normal((3, 4, 2)) * 3, spec)
        np.testing.assert_allclose(project_constraint_set(P, spec), P, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(M=matrices, r=st.floats(0.05, 20), seed=st.integers(0, 2**31),
       kind=st.sampled_from(["l11", "nuclear"]))
def test_projection_beats_feasible_competitors(M, r, seed, kind):
    rng = np.random.default_rng(seed)
    P = PROJ[kind](M, r)
    assert slice_norm(P, kind) <= r + 1e-9
    best = np.linalg.norm(M - P)
    for _ in range(50):
        Q = rng.standard_normal(M.shape)
        Q *= r * rng.random() / max(slice_norm(Q, kind), 1e-300)
        assert best <= np.linalg.norm(M - Q) + 1e-9


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["l11", "nuclear"]))
def test_projection_nonexpansive(seed, kind):
    rng = np.random.default_rng(seed)
    M1, M2 = rng.standard_normal((2, 3, 4)) * 2
    d = np.linalg.norm(PROJ[kind](M1, 1.0) - PROJ[kind](M2, 1.0))
    assert d <= np.linalg.norm(M1 - M2) + 1e-12


def test_feasible_set_is_convex(rng):
    spec = ConstraintSpec((("l11", 1.0), ("nuclear", 2.0)))
    for _ in range(100):
        A = project_constraint_set(rng.standard_normal((3, 3, 2)) * 4, spec)
        B = project_constraint_set(rng.standard_normal((3, 3, 2)) * 4, spec)
        t = rng.random()
        assert spec.contains(t * A + (1 - t) * B)


def test_nuclear_projection_deterministic(rng):
    M = rng.standard_normal((5, 4))
    a = project_nuclear_ball(M, 1.0)
    b = project_nuclear_ball(M.copy(), 1.0)
    np.testing.assert_array_equal(a, b)


def test_spec_roundtrip():
    items = [{"norm": "l11", "radius": 1.5}, {"norm": "nuclear", "radius": 2.0}]
    spec = ConstraintSpec.from_list(items)
    assert spec.to_list() == items
    np.testing.assert_array_equal(spec.radii, [1.5, 2.0])
    np.testing.assert_array_equal(spec.g, [1.0, 1.0])


def test_check_parameter_rejects_nonfinite():
    from truncexp.errors import NumericalError, TruncExpError
    with pytest.raises(NumericalError):
        check_parameter(np.array([[[np.nan]]]), (1, 1, 1))
    with pytest.raises(TruncExpError):
        check_parameter(np.zeros(3), (1, 2, 1))


# -- norm domination ---------------------------------------------------------

def test_domination_examples():
    assert norm_domination_ratio(np.ones((2, 3)), "lpq", 1, 1) == pytest.approx(1.0)
    assert norm_domination_ratio(np.eye(2), "schatten", 1) == pytest.approx(0.5)
    assert norm_domination_ratio(np.eye(2), "operator", 2) == pytest.approx(0.25)


def test_matrix_norm_families(rng):
    M = rng.standard_normal((4, 3))
    assert matrix_norm(M, "lpq", 2, 2) == pytest.approx(np.linalg.norm(M))
    assert matrix_norm(M, "schatten", 1) == pytest.approx(np.linalg.norm(M, "nuc"))
    assert matrix_norm(M, "schatten", np.inf) == pytest.approx(np.linalg.norm(M, 2))
    assert matrix_norm(M, "operator", 1) == pytest.approx(np.linalg.norm(M, 1))
    assert matrix_norm(M, "operator", np.inf) == pytest.approx(np.linalg.norm(M, np.inf))


@pytest.mark.parametrize("kind, p, q", [("lpq", 1, 1), ("lpq", 2, 1), ("lpq", 3, 2),
                                        ("schatten", 1, 1), ("schatten", 2, 1),
                                        ("operator", 1, 1), ("operator", 2, 1),
                                        ("operator", np.inf, 1)])
def test_domination_holds(kind, p, q):
    rep = check_norm_domination(kind, 500, p, q, seed=3)
    assert rep.ok and rep.max_ratio <= 1.0 + 1e-12


def test_domination_rejects_p_below_one():
    with pytest.raises(ValueError):
        check_norm_domination("lpq", 10, p=0.5)
