"""Rigid-body bookkeeping for the carried object.

Frames follow the usual convention: ``S`` is the ground-fixed spatial frame and
``B`` is attached to the object centroid.  Quaternions are scalar-first
``(w, x, y, z)`` and map body coordinates into the spatial frame.

Goals are numbered from 1, matching the ``g_k in {NoGoal, 1..N}`` labels used
everywhere else in the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateDirectionError, InvalidInputError

UNIT_TOL = 1e-9


def _finite(name, value, shape=None):
    arr = np.asarray(value, dtype=float)
    if shape is not None and arr.shape[-len(shape):] != shape:
        raise InvalidInputError(f"{name} must have trailing shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


# --------------------------------------------------------------------------
# quaternion helpers (vectorised over a leading axis)
# --------------------------------------------------------------------------

def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise InvalidInputError("zero quaternion")
    return q / n


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_multiply(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_to_matrix(q):
    """Rotation matrix (or stack of them) for unit quaternion(s) ``q``."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], axis=-2)


def quat_from_rotvec(rv):
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sinc form keeps small angles accurate
    k = 0.5 * np.sinc(half / np.pi)
    return np.concatenate([np.cos(half), k * rv], axis=-1)


def quat_to_rotvec(q):
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0, -q, q)
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, q[..., :1])
    scale = np.where(s > 1e-12, angle / np.where(s > 1e-12, s, 1.0), 2.0)
    return vec * scale


def quat_from_yaw(yaw):
    yaw = np.asarray(yaw, dtype=float)
    z = np.zeros_like(yaw)
    return np.stack([np.cos(yaw / 2), z, z, np.sin(yaw / 2)], axis=-1)


def quat_to_yaw(q):
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))


def rotate(q, v):
    """Rotate body vector(s) ``v`` into the spatial frame."""
    return np.einsum("...ij,...j->...i", quat_to_matrix(q), np.asarray(v, dtype=float))


# --------------------------------------------------------------------------
# value types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Object pose: centroid position in S and orientation quaternion."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = _finite("position", self.position, (3,))
        q = _finite("orientation", self.orientation, (4,))
        if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
            raise InvalidInputError("orientation quaternion must have unit norm")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)


@dataclass(frozen=True)
class Twist:
    """Centroid velocity in S and angular velocity in B."""

    linear_velocity: np.ndarray
    angular_velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear_velocity", _finite("linear_velocity", self.linear_velocity, (3,)))
        object.__setattr__(self, "angular_velocity", _finite("angular_velocity", self.angular_velocity, (3,)))


@dataclass(frozen=True)
class HandleGeometry:
    """Grasp points of both handles, in body coordinates (m)."""

    q1: np.ndarray = field(default_factory=lambda: np.array([-0.305, 0.0, 0.0]))
    q2: np.ndarray = field(default_factory=lambda: np.array([0.305, 0.0, 0.0]))

    def __post_init__(self):
        q1 = _finite("q1", self.q1, (3,))
        q2 = _finite("q2", self.q2, (3,))
        if np.allclose(q1, q2):
            raise InvalidInputError("handle points must differ")
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)

    def point(self, agent):
        if agent not in (1, 2):
            raise InvalidInputError(f"agent must be 1 or 2, got {agent!r}")
        return self.q1 if agent == 1 else self.q2

    def fits_within(self, dimensions):
        half = np.asarray(dimensions, dtype=float) / 2.0 + 1e-12
        return all(np.all(np.abs(q[:2]) <= half) for q in (self.q1, self.q2))


@dataclass(frozen=True)
class GoalLayout:
    """Goal coordinates ``l(g_i)`` on the horizontal plane, goal ``i`` at row ``i - 1``."""

    goals: np.ndarray

    def __post_init__(self):
        g = _finite("goals", self.goals)
        if g.ndim != 2 or g.shape[1] != 2 or g.shape[0] < 1:
            raise InvalidInputError("goals must be an (N, 2) array with N >= 1")
        for i in range(len(g)):
            for j in range(i + 1, len(g)):
                if np.allclose(g[i], g[j]):
                    raise InvalidInputError(f"goals {i + 1} and {j + 1} coincide")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "goals", g)

    @classmethod
    def circular(cls, radius=2.4, spacing_deg=40.0, n=3, center=(0.0, 0.0), heading_deg=0.0):
        """Goals on an arc around ``center``, symmetric about ``heading_deg``.

        Goal 1 sits at the most clockwise bearing.
        """
        offsets = (np.arange(n) - (n - 1) / 2.0) * spacing_deg + heading_deg
        ang = np.deg2rad(offsets)
        pts = np.column_stack([np.cos(ang), np.sin(ang)]) * radius + np.asarray(center, dtype=float)
        return cls(pts)

    @property
    def n_goals(self):
        return len(self.goals)

    def coordinate(self, goal_index):
        if not isinstance(goal_index, (int, np.integer)) or not 1 <= goal_index <= self.n_goals:
            raise InvalidInputError(f"goal index {goal_index!r} outside 1..{self.n_goals}")
        return self.goals[goal_index - 1]

    def nearest(self, point):
        d = np.linalg.norm(self.goals - np.asarray(point, dtype=float)[:2], axis=1)
        return int(np.argmin(d)) + 1


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------

def handle_velocity(pose, twist, handle_point):
    """Spatial velocity of a body-fixed handle point.

    ``v_k = R_sb (w_b x q_k) + pdot_sb``.
    """
    q = _finite("handle_point", handle_point, (3,))
    return pose.rotation @ np.cross(twist.angular_velocity, q) + twist.linear_velocity


def handle_velocities(orientation, linear_velocity, angular_velocity, handle_point):
    """Vectorised :func:`handle_velocity` over a stream of samples.

    Parameters
    ----------
    orientation : (T, 4) array
    linear_velocity : (T, 3) array, spatial frame
    angular_velocity : (T, 3) array, body frame
    handle_point : (3,) array, body frame
    """
    q = _finite("handle_point", handle_point, (3,))
    lever = np.cross(_finite("angular_velocity", angular_velocity, (3,)), q)
    return rotate(orientation, lever) + _finite("linear_velocity", linear_velocity, (3,))


def goal_direction(object_position, layout, goal_index):
    """Unit 2-vector from the object's horizontal position toward goal ``goal_index``."""
    p = _finite("object_position", object_position)[:2]
    d = layout.coordinate(goal_index) - p
    n = np.hypot(d[0], d[1])
    if n == 0.0:
        raise DegenerateDirectionError(f"object sits exactly on goal {goal_index}")
    return d / n


def goal_directions(positions, layout):
    """Directions to every goal for a stream of positions.

    Returns an array of shape ``(T, N, 2)``; rows where the object sits exactly
    on a goal raise :class:`DegenerateDirectionError`.
    """
    p = _finite("positions", positions)[..., :2]
    d = layout.goals[None, :, :] - p[:, None, :]
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise DegenerateDirectionError("object sits exactly on a goal")
    return d / n


def project(vector, direction):
    """Signed scalar projection of ``vector`` on the unit ``direction``.

    Works element-wise over leading axes.  Zero vectors project to 0.
    """
    v = _finite("vector", vector)
    d = _finite("direction", direction)
    if np.any(np.abs(np.linalg.norm(d, axis=-1) - 1.0) > UNIT_TOL):
        raise InvalidInputError("direction must have unit norm")
    return np.sum(v[..., : d.shape[-1]] * d, axis=-1)
