"""Unit tests for linear blend skinning and the simplex projection."""

import numpy as np
import pytest

from artifield.errors import InvalidArgumentError
from artifield.kinematics import KinematicTree, bone_transforms
from artifield.skinning import (
    blend_matrices,
    lbs,
    simplex_project_rows,
    validate_weights,
)


class PoseLike:
    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=np.float64)


@pytest.fixture
def chain():
    tree = KinematicTree(np.array([-1, 0]))
    joints = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    return tree, joints


class TestValidateWeights:
    def test_valid_rows_pass(self):
        w = np.array([[0.3, 0.7], [1.0, 0.0]])
        assert np.array_equal(validate_weights(w, 2), w)

    def test_negative_rejected(self):
        with pytest.raises(InvalidArgumentError):
            validate_weights(np.array([[1.2, -0.2]]))

    def test_bad_row_sum_rejected(self):
        with pytest.raises(InvalidArgumentError):
            validate_weights(np.array([[0.5, 0.6]]))

    def test_column_count_enforced(self):
        with pytest.raises(InvalidArgumentError):
            validate_weights(np.array([[0.5, 0.5]]), num_parts=3)


class TestLbs:
    def test_rest_pose_is_identity(self, chain):
        tree, joints = chain
        tf = bone_transforms(PoseLike(np.zeros((2, 3))), joints, tree)
        v = np.array([[0.2, 0.1, 0.0], [1.5, 0.0, 0.3]])
        w = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert np.allclose(lbs(v, w, tf), v, atol=1e-12)

    def test_one_hot_weights_are_rigid(self, chain):
        tree, joints = chain
        theta = np.zeros((2, 3))
        theta[1, 2] = np.pi / 2
        tf = bone_transforms(PoseLike(theta), joints, tree)
        # A vertex bound entirely to bone 1 rotates about joint 1.
        v = np.array([[2.0, 0.0, 0.0]])
        w = np.array([[0.0, 1.0]])
        out = lbs(v, w, tf)
        assert np.allclose(out, [[1.0, 1.0, 0.0]], atol=1e-12)

    def test_blend_is_convex_combination(self, chain):
        tree, joints = chain
        theta = np.zeros((2, 3))
        theta[1, 2] = 0.8
        tf = bone_transforms(PoseLike(theta), joints, tree)
        v = np.array([[1.5, 0.2, 0.0]])
        a = lbs(v, np.array([[1.0, 0.0]]), tf)
        b = lbs(v, np.array([[0.0, 1.0]]), tf)
        mid = lbs(v, np.array([[0.4, 0.6]]), tf)
        assert np.allclose(mid, 0.4 * a + 0.6 * b, atol=1e-12)

    def test_blend_matrices_match_manual_sum(self, chain):
        tree, joints = chain
        theta = np.zeros((2, 3))
        theta[0, 1] = 0.3
        theta[1, 2] = -0.5
        tf = bone_transforms(PoseLike(theta), joints, tree)
        w = np.array([[0.25, 0.75]])
        rel = tf.relative()
        expected = 0.25 * rel[0] + 0.75 * rel[1]
        assert np.allclose(blend_matrices(w, tf)[0], expected, atol=1e-12)

    def test_mismatched_rows_rejected(self, chain):
        tree, joints = chain
        tf = bone_transforms(PoseLike(np.zeros((2, 3))), joints, tree)
        with pytest.raises(InvalidArgumentError):
            lbs(np.zeros((3, 3)), np.ones((2, 2)) * 0.5, tf)


class TestSimplexProjection:
    def test_valid_rows_are_fixed_points(self):
        rng = np.random.default_rng(0)
        w = rng.dirichlet(np.ones(5), size=10)
        assert np.allclose(simplex_project_rows(w), w, atol=1e-12)

    def test_output_on_simplex(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(50, 8))
        out = simplex_project_rows(w)
        assert (out >= 0).all()
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_quadratic_program(self):
        cvxpy = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(2)
        for _ in range(5):
            v = rng.normal(size=4)
            x = cvxpy.Variable(4)
            prob = cvxpy.Problem(
                cvxpy.Minimize(cvxpy.sum_squares(x - v)),
                [x >= 0, cvxpy.sum(x) == 1],
            )
            prob.solve()
            ours = simplex_project_rows(v.reshape(1, 4))[0]
            assert np.allclose(ours, x.value, atol=1e-6)

    def test_single_large_entry_becomes_one_hot(self):
        out = simplex_project_rows(np.array([[5.0, 0.0, 0.0]]))
        assert np.allclose(out, [[1.0, 0.0, 0.0]])
