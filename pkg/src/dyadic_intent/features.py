"""Interaction power and goal-projected intent features."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InvalidInputError
from .kinematics import GoalLayout, HandleGeometry, _finite, goal_directions, project

DEFAULT_DEADBAND = (0.5, 0.02)


class Quadrant(enum.IntEnum):
    """Sign pattern of (projected force, projected velocity) toward one goal."""

    NEUTRAL = 0
    TOWARD_DRIVE = 1   # f > 0, v > 0: pushing the object toward the goal
    RESIST = 2         # f < 0, v > 0: holding back motion toward the goal
    YIELD = 3          # f > 0, v < 0: pushing toward the goal but losing ground
    AWAY_DRIVE = 4     # f < 0, v < 0: driving away; power is positive anyway

    @property
    def label(self):
        return {0: "Neutral", 1: "TowardDrive", 2: "Resist", 3: "Yield", 4: "AwayDrive"}[int(self)]

    @classmethod
    def from_label(cls, text):
        for q in cls:
            if q.label == text:
                return q
        raise InvalidInputError(f"unknown quadrant label {text!r}")


@dataclass(frozen=True)
class PhysicalObject:
    mass: float = 2.3
    dimensions: tuple = (0.61, 0.31)
    handles: HandleGeometry = field(default_factory=HandleGeometry)

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidInputError("mass must be positive")
        if any(d <= 0 for d in self.dimensions):
            raise InvalidInputError("dimensions must be positive")
        if not self.handles.fits_within(self.dimensions):
            raise InvalidInputError("handle points lie outside the object footprint")

    @property
    def yaw_inertia(self):
        a, b = self.dimensions
        return self.mass * (a * a + b * b) / 12.0


def agent_power(f, v):
    """Instantaneous power ``F . v`` (W); works row-wise on stacked samples."""
    f = _finite("force", f)
    v = _finite("velocity", v)
    return np.sum(f * v, axis=-1)


def total_power(f_sum, v_com):
    """Power of the net applied force at the centroid velocity."""
    return agent_power(f_sum, v_com)


def projected_features(f, v, direction):
    """Projected force, velocity and their product toward a goal direction.

    Only the horizontal components of ``f`` and ``v`` take part.
    """
    f = _finite("force", f)
    v = _finite("velocity", v)
    f_proj = project(f[..., :2], direction)
    v_proj = project(v[..., :2], direction)
    return f_proj, v_proj, f_proj * v_proj


def quadrant(f_proj, v_proj, deadband=DEFAULT_DEADBAND):
    """Classify one (force, velocity) projection pair; see :class:`Quadrant`."""
    return Quadrant(int(quadrant_codes(f_proj, v_proj, deadband)))


def quadrant_codes(f_proj, v_proj, deadband=DEFAULT_DEADBAND):
    f = np.asarray(f_proj, dtype=float)
    v = np.asarray(v_proj, dtype=float)
    f_db, v_db = deadband
    codes = np.where(f > 0, np.where(v > 0, Quadrant.TOWARD_DRIVE, Quadrant.YIELD),
                     np.where(v > 0, Quadrant.RESIST, Quadrant.AWAY_DRIVE))
    codes = np.where((np.abs(f) < f_db) | (np.abs(v) < v_db), Quadrant.NEUTRAL, codes)
    return codes.astype(int)


@dataclass
class PowerFeatures:
    """Per-tick power features.

    ``f_proj``, ``v_proj``, ``p_proj`` and ``quadrant`` have shape
    ``(T, 2, N)``: tick, agent (0 -> agent 1), goal (0 -> goal 1).
    """

    t: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p_sum: np.ndarray
    f_proj: np.ndarray
    v_proj: np.ndarray
    p_proj: np.ndarray
    quadrant: np.ndarray

    def __len__(self):
        return len(self.t)

    @property
    def n_goals(self):
        return self.f_proj.shape[2]

    def power(self, agent):
        return self.p1 if agent == 1 else self.p2


def compute_power_features(fused, layout, deadband=DEFAULT_DEADBAND):
    """Evaluate all per-tick features on a :class:`~dyadic_intent.fusion.FusedStream`.

    Goal directions are taken from the current object position at each tick.
    """
    dirs = goal_directions(fused.position, layout)            # (T, N, 2)
    p1 = agent_power(fused.f1, fused.v1)
    p2 = agent_power(fused.f2, fused.v2)
    p_sum = total_power(fused.f1 + fused.f2, fused.linear_velocity)
    T, N = len(fused), layout.n_goals
    f_proj = np.empty((T, 2, N))
    v_proj = np.empty((T, 2, N))
    for k, (f, v) in enumerate(((fused.f1, fused.v1), (fused.f2, fused.v2))):
        f_proj[:, k, :] = np.einsum("tj,tnj->tn", f[:, :2], dirs)
        v_proj[:, k, :] = np.einsum("tj,tnj->tn", v[:, :2], dirs)
    p_proj = f_proj * v_proj
    quad = quadrant_codes(f_proj, v_proj, deadband)
    return PowerFeatures(fused.t.copy(), p1, p2, p_sum, f_proj, v_proj, p_proj, quad)


def rest_grasp_force(fused, t0, t1):
    """Mean force magnitude per handle while the object rests in ``[t0, t1]``.

    Diagnostic only; nothing downstream consumes it.
    """
    m = fused.window(t0, t1)
    if not np.any(m):
        raise InvalidInputError("empty rest window")
    return (float(np.mean(np.linalg.norm(fused.f1[m], axis=1))),
            float(np.mean(np.linalg.norm(fused.f2[m], axis=1))))


class PowerFeatureTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer: ``FusedStream -> PowerFeatures``."""

    def __init__(self, layout=None, force_deadband=0.5, velocity_deadband=0.02):
        self.layout = layout
        self.force_deadband = force_deadband
        self.velocity_deadband = velocity_deadband

    def fit(self, X=None, y=None):
        return self

    def transform(self, fused):
        layout = self.layout if self.layout is not None else GoalLayout.circular()
        return compute_power_features(fused, layout, (self.force_deadband, self.velocity_deadband))
