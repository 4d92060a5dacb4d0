import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localavg.errors import DimensionError, ZeroMatrixError
from localavg.geometry import (AffineSubspace, Ball, HalfSpace, PointSet, SubspaceCollection,
                               distance, project, random_collection, separation_constant,
                               smallest_nonzero_singular_value)

X_AXIS = AffineSubspace(np.zeros(2), [[0.0, 1.0]])
Y_AXIS = AffineSubspace(np.zeros(2), [[1.0, 0.0]])
DIAGONAL = AffineSubspace.from_normals(np.zeros(2), [[1.0, -1.0]])


def test_projection_examples():
    np.testing.assert_allclose(project(X_AXIS, np.array([3.0, 4.0])), [3.0, 0.0])
    np.testing.assert_allclose(project(X_AXIS, np.array([-2.0, 0.0])), [-2.0, 0.0])
    np.testing.assert_allclose(project(DIAGONAL, np.array([2.0, 0.0])), [1.0, 1.0], atol=1e-15)


def test_distance_examples():
    assert distance(X_AXIS, np.array([3.0, 4.0])) == pytest.approx(4.0)
    both = SubspaceCollection((X_AXIS, Y_AXIS), np.zeros(2))
    assert distance(both, np.array([1.0, 1.0])) == pytest.approx(math.sqrt(2))
    assert distance(DIAGONAL, np.array([2.0, 0.0])) == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize("members, expected", [
    ((X_AXIS, Y_AXIS), 2.0),
    ((X_AXIS, X_AXIS), 1.0),
    ((DIAGONAL,), 1.0),
])
def test_separation_constant_examples(members, expected):
    c = separation_constant(SubspaceCollection(members, np.zeros(2)))
    assert c == pytest.approx(expected, abs=1e-12)


def test_separation_constant_whole_space_members(caplog):
    whole = AffineSubspace(np.zeros(2), np.zeros((0, 2)))
    assert separation_constant(SubspaceCollection((whole, whole), np.zeros(2))) == 1.0
    assert "degenerate" in caplog.text


@pytest.mark.parametrize("M, expected", [
    (np.diag([0.0, 0.5, 2.0]), 0.5),
    (np.eye(4), 1.0),
    (0.5 * (np.diag([0.0, 1.0]) + np.array([[0.5, -0.5], [-0.5, 0.5]])), (2 - math.sqrt(2)) / 4),
])
def test_smallest_nonzero_singular_value(M, expected):
    assert smallest_nonzero_singular_value(M) == pytest.approx(expected, rel=1e-12)


def test_smallest_nonzero_singular_value_errors():
    with pytest.raises(ZeroMatrixError):
        smallest_nonzero_singular_value(np.zeros((3, 3)))
    with pytest.raises(DimensionError):
        smallest_nonzero_singular_value(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        smallest_nonzero_singular_value(np.eye(201))
    with pytest.raises(ValueError):
        smallest_nonzero_singular_value(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_affine_subspace_checks_orthonormality():
    with pytest.raises(ValueError):
        AffineSubspace(np.zeros(2), [[1.0, 1.0]])


def test_from_equations(rng):
    A = rng.standard_normal((3, 6))
    x = rng.standard_normal(6)
    S = AffineSubspace.from_equations(A, A @ x)
    assert S.codimension == 3 and S.contains(x)
    y = S.project(rng.standard_normal(6))
    np.testing.assert_allclose(A @ y, A @ x, atol=1e-10)
    with pytest.raises(ValueError):
        AffineSubspace.from_equations(np.array([[1.0], [1.0]]), np.array([0.0, 1.0]))


def test_collection_requires_common_point():
    shifted = AffineSubspace(np.array([0.0, 1.0]), [[0.0, 1.0]])
    with pytest.raises(ValueError):
        SubspaceCollection((X_AXIS, shifted), np.zeros(2))


def test_other_convex_sets():
    disk = Ball(np.array([0.0, 1.0]), 1.0)
    np.testing.assert_allclose(disk.project(np.array([0.0, 3.0])), [0.0, 2.0])
    assert disk.distance(np.array([0.0, 0.5])) == 0.0
    half = HalfSpace(np.array([0.0, 1.0]), 0.0)
    np.testing.assert_allclose(half.project(np.array([2.0, 3.0])), [2.0, 0.0])
    assert half.distance(np.array([5.0, -1.0])) == 0.0
    assert PointSet(np.zeros(2)).distance(np.array([3.0, 4.0])) == pytest.approx(5.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_projection_properties(seed, d):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, d + 1))
    S = AffineSubspace.from_normals(rng.standard_normal(d), rng.standard_normal((k, d)))
    np.testing.assert_allclose(S.normal_basis @ S.normal_basis.T, np.eye(S.codimension), atol=1e-10)
    x = rng.standard_normal(d) * 5
    p = S.project(x)
    np.testing.assert_allclose(S.project(p), p, atol=1e-10)
    np.testing.assert_allclose(S.normal_basis @ (p - S.anchor), 0.0, atol=1e-10)
    # x - P(x) lies in the normal space, so it is orthogonal to every direction in S
    direction = S.project(S.anchor + rng.standard_normal(d)) - S.anchor
    assert abs((x - p) @ direction) <= 1e-9 * max(1.0, np.linalg.norm(x - p) * np.linalg.norm(direction))
    assert S.distance(x) == pytest.approx(np.linalg.norm(x - p), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kernel_of_q_is_direction_space(seed):
    rng = np.random.default_rng(seed)
    coll = random_collection(rng, int(rng.integers(1, 6)), int(rng.integers(2, 11)))
    S = coll.intersection()
    for s in coll.members:
        for _ in range(3):
            y = S.project(rng.standard_normal(coll.dimension))
            assert s.contains(y, tol=1e-8)
    assert separation_constant(coll) >= 1.0


def test_single_member_collection_matches_member(rng):
    s = AffineSubspace.from_normals(rng.standard_normal(5), rng.standard_normal((2, 5)))
    coll = SubspaceCollection((s,), s.anchor)
    for _ in range(20):
        x = rng.standard_normal(5)
        np.testing.assert_allclose(coll.project(x), s.project(x), atol=1e-12)
