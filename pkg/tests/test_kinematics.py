import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_intent.exceptions import DegenerateDirectionError, InvalidInputError
from dyadic_intent.kinematics import (
    GoalLayout,
    HandleGeometry,
    Pose,
    Twist,
    goal_direction,
    goal_directions,
    handle_velocities,
    handle_velocity,
    project,
    quat_from_rotvec,
    quat_from_yaw,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    quat_to_rotvec,
    quat_to_yaw,
)
from oracles import fd_handle_velocity

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
quat = st.tuples(finite, finite, finite, finite).filter(lambda q: np.linalg.norm(q) > 0.1).map(
    lambda q: quat_normalize(np.array(q)))
vec2 = st.tuples(finite, finite).map(np.array)


def random_motion(rng):
    q = quat_normalize(rng.normal(size=4))
    return (Pose(rng.normal(size=3), q), Twist(rng.normal(size=3), rng.normal(size=3)),
            rng.uniform(-0.5, 0.5, size=3))


def test_pure_translation_example():
    pose = Pose(np.zeros(3), quat_normalize(np.array([0.3, 0.1, -0.5, 0.7])))
    tw = Twist(np.array([1.0, 0, 0]), np.zeros(3))
    for q in ([0.305, 0, 0], [-0.305, 0.1, 0.2], [0, 0, 0]):
        assert np.array_equal(handle_velocity(pose, tw, q), [1.0, 0, 0])


def test_pure_spin_example():
    pose = Pose(np.zeros(3))
    tw = Twist(np.zeros(3), np.array([0, 0, 1.0]))
    np.testing.assert_allclose(handle_velocity(pose, tw, [0.305, 0, 0]), [0, 0.305, 0], atol=1e-15)


def test_matches_finite_difference_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pose, tw, q = random_motion(rng)
        ref = fd_handle_velocity(pose.position, pose.orientation, tw.linear_velocity, tw.angular_velocity, q)
        np.testing.assert_allclose(handle_velocity(pose, tw, q), ref, atol=1e-6)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(1)
    motions = [random_motion(rng) for _ in range(20)]
    q = np.array([0.2, -0.1, 0.05])
    Q = np.array([m[0].orientation for m in motions])
    V = np.array([m[1].linear_velocity for m in motions])
    W = np.array([m[1].angular_velocity for m in motions])
    out = handle_velocities(Q, V, W, q)
    for k, (pose, tw, _) in enumerate(motions):
        np.testing.assert_allclose(out[k], handle_velocity(pose, tw, q), atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(quat, vec3, vec3, vec3, vec3)
def test_rigidity(q, v, w, q1, q2):
    pose, tw = Pose(np.zeros(3), q), Twist(v, w)
    dv = handle_velocity(pose, tw, q1) - handle_velocity(pose, tw, q2)
    dr = pose.rotation @ (q1 - q2)
    assert abs(np.dot(dv, dr)) <= 1e-9 * max(1.0, np.linalg.norm(dv) * np.linalg.norm(dr))


@settings(max_examples=100, deadline=None)
@given(quat, vec3, vec3)
def test_pure_translation_identity(q, v, point):
    tw = Twist(v, np.zeros(3))
    assert np.array_equal(handle_velocity(Pose(np.zeros(3), q), tw, point), v + 0.0)


def test_goal_direction_examples():
    np.testing.assert_allclose(goal_direction([0, 0], GoalLayout(np.array([[2.4, 0.0]])), 1), [1, 0])
    np.testing.assert_allclose(goal_direction([0, 0], GoalLayout(np.array([[0.0, -1.0]])), 1), [0, -1])
    np.testing.assert_allclose(goal_direction([1, 1], GoalLayout(np.array([[4.0, 5.0]])), 1), [0.6, 0.8])


def test_goal_direction_errors():
    lay = GoalLayout(np.array([[1.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(DegenerateDirectionError):
        goal_direction([1, 1], lay, 1)
    with pytest.raises(InvalidInputError):
        goal_direction([0, 0], lay, 0)
    with pytest.raises(InvalidInputError):
        goal_direction([0, 0], lay, 3)
    with pytest.raises(DegenerateDirectionError):
        goal_directions(np.array([[0, 0], [2.0, 0.0]]), lay)


def test_goal_directions_stream_matches_single():
    lay = GoalLayout.circular()
    P = np.random.default_rng(2).normal(size=(10, 2))
    D = goal_directions(P, lay)
    for t in range(10):
        for i in range(3):
            np.testing.assert_allclose(D[t, i], goal_direction(P[t], lay, i + 1), atol=1e-15)


def test_circular_layout():
    lay = GoalLayout.circular(2.4, 40.0, 3)
    ang = np.rad2deg(np.arctan2(lay.goals[:, 1], lay.goals[:, 0]))
    np.testing.assert_allclose(ang, [-40, 0, 40], atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(lay.goals, axis=1), 2.4)
    assert lay.nearest([2.0, 1.5]) == 3


def test_layout_rejects_duplicates():
    with pytest.raises(InvalidInputError):
        GoalLayout(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_project_examples():
    assert project([3, 4], [1, 0]) == 3
    assert project([3, 4], [0.6, 0.8]) == pytest.approx(5)
    assert project([3, 4], [-0.8, 0.6]) == pytest.approx(0, abs=1e-15)
    with pytest.raises(InvalidInputError):
        project([3, 4], [1, 1])


@settings(max_examples=200, deadline=None)
@given(vec2, st.floats(0, 2 * np.pi))
def test_projection_bound(x, ang):
    d = np.array([np.cos(ang), np.sin(ang)])
    assert abs(project(x, d)) <= np.linalg.norm(x) * (1 + 1e-12) + 1e-12
    np.testing.assert_allclose(abs(project(2.5 * d, d)), 2.5, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(vec2, vec2, finite, st.floats(0, 2 * np.pi))
def test_projection_linear(x, y, a, ang):
    d = np.array([np.cos(ang), np.sin(ang)])
    lhs = project(a * x + y, d)
    assert lhs == pytest.approx(a * project(x, d) + project(y, d), abs=1e-9)


def test_quaternion_helpers_roundtrip():
    rng = np.random.default_rng(3)
    rv = rng.normal(size=(50, 3))
    small = rv * 0.3
    np.testing.assert_allclose(quat_to_rotvec(quat_from_rotvec(small)), small, atol=1e-12)
    yaw = rng.uniform(-3, 3, 50)
    np.testing.assert_allclose(quat_to_yaw(quat_from_yaw(yaw)), yaw, atol=1e-12)
    q = quat_from_rotvec(rv)
    R = quat_to_matrix(q)
    np.testing.assert_allclose(R @ R.transpose(0, 2, 1), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(quat_to_matrix(quat_multiply(q[:-1], q[1:])), R[:-1] @ R[1:], atol=1e-12)


def test_pose_validation():
    with pytest.raises(InvalidInputError):
        Pose(np.zeros(3), np.array([1.0, 1.0, 0, 0]))
    with pytest.raises(InvalidInputError):
        Pose(np.array([np.nan, 0, 0]))
    with pytest.raises(InvalidInputError):
        HandleGeometry(np.zeros(3), np.zeros(3))
