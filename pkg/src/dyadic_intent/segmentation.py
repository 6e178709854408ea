"""Negotiation-phase boundary and push-pull action segmentation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConfigError, InvalidInputError
from .kinematics import GoalLayout


@dataclass
class SegmenterConfig:
    """Tunables for both detectors.

    ``power_threshold=None`` selects the session-adaptive threshold
    ``max(power_floor, power_fraction * p95(|P|))``.
    """

    epsilon: float = 0.2
    v_min: float = 0.05
    power_threshold: Optional[float] = None
    power_floor: float = 0.5
    power_fraction: float = 0.2
    min_peak_separation: float = 0.15
    merge_window: float = 0.25
    min_action_duration: float = 0.1

    def __post_init__(self):
        for name in ("epsilon", "v_min", "power_floor", "power_fraction",
                     "min_peak_separation", "merge_window", "min_action_duration"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.power_threshold is not None and not self.power_threshold > 0:
            raise ConfigError("power_threshold must be positive")
        if self.min_peak_separation > self.merge_window:
            raise ConfigError("min_peak_separation must not exceed merge_window")


@dataclass
class PhaseBoundary:
    t_start: float
    t_dec: Optional[float]
    settled_goal: int
    distance: Optional[float] = None
    t_arrival: Optional[float] = None

    @property
    def consensus(self):
        return self.t_dec is not None

    @property
    def negotiation_duration(self):
        return None if self.t_dec is None else self.t_dec - self.t_start

    def to_record(self):
        return {
            "t_start": self.t_start,
            "t_dec": self.t_dec,
            "negotiation_duration": self.negotiation_duration,
            "settled_goal": self.settled_goal,
            "consensus": self.consensus,
            "distance": self.distance,
            "t_arrival": self.t_arrival,
        }


@dataclass
class ActionSegment:
    agent: int
    t_on: float
    t_peak: float
    t_off: float
    peak_power: float
    features: Optional[np.ndarray] = field(default=None, repr=False)
    label: Optional[int] = None
    classified_goal: Optional[int] = None
    confidence: Optional[float] = None

    @property
    def duration(self):
        return self.t_off - self.t_on


# --------------------------------------------------------------------------
# negotiation boundary
# --------------------------------------------------------------------------

def ray_distance(p, v, goal_xy):
    """Distance from ``goal_xy`` to the forward rays ``p + lam * v, lam >= 0``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))[:, :2]
    v = np.atleast_2d(np.asarray(v, dtype=float))[:, :2]
    d = np.asarray(goal_xy, dtype=float) - p
    vv = np.sum(v * v, axis=1)
    lam = np.where(vv > 0, np.sum(d * v, axis=1) / np.where(vv > 0, vv, 1.0), 0.0)
    lam = np.maximum(lam, 0.0)
    return np.linalg.norm(d - lam[:, None] * v, axis=1)


def detect_negotiation_end(t, position, velocity, layout, goal, config=None, t_start=None):
    """Earliest time after which the object keeps heading at ``goal``.

    A tick qualifies when the speed is at least ``v_min`` and the goal lies
    within ``epsilon`` of the forward velocity ray.  Ticks from the first one
    inside ``epsilon`` of the goal (arrival) onward are ignored.  Returns a
    :class:`PhaseBoundary` whose ``t_dec`` is ``None`` when no such time exists.
    """
    config = config or SegmenterConfig()
    t = np.asarray(t, dtype=float)
    if len(t) == 0:
        raise InvalidInputError("empty trajectory")
    goal_xy = layout.coordinate(goal)
    p = np.asarray(position, dtype=float)[:, :2]
    v = np.asarray(velocity, dtype=float)[:, :2]
    if t_start is None:
        t_start = float(t[0])
    i0 = int(np.searchsorted(t, t_start - 1e-9))
    inside = np.nonzero(np.linalg.norm(p - goal_xy, axis=1) < config.epsilon)[0]
    inside = inside[inside >= i0]
    end = int(inside[0]) if len(inside) else len(t)
    t_arrival = float(t[end]) if end < len(t) else None
    if end <= i0:
        return PhaseBoundary(float(t_start), None, goal, None, t_arrival)
    dist = ray_distance(p[i0:end], v[i0:end], goal_xy)
    ok = (np.linalg.norm(v[i0:end], axis=1) >= config.v_min) & (dist < config.epsilon)
    if not ok[-1]:
        return PhaseBoundary(float(t_start), None, goal, None, t_arrival)
    bad = np.nonzero(~ok)[0]
    j = int(bad[-1]) + 1 if len(bad) else 0
    return PhaseBoundary(float(t_start), float(t[i0 + j]), goal, float(dist[j]), t_arrival)


def settled_goal(position, layout):
    """Goal nearest to where the object ended up."""
    return layout.nearest(np.asarray(position, dtype=float)[-1])


# --------------------------------------------------------------------------
# action detection
# --------------------------------------------------------------------------

def resolve_threshold(powers, config=None):
    """Absolute power threshold (W) for a session.

    ``powers`` may be one stream or several stacked along axis 0.
    """
    config = config or SegmenterConfig()
    if config.power_threshold is not None:
        return float(config.power_threshold)
    a = np.abs(np.concatenate([np.ravel(p) for p in np.atleast_2d(powers)]))
    p95 = float(np.percentile(a, 95)) if a.size else 0.0
    return max(config.power_floor, config.power_fraction * p95)


def _crossing(t, a, i, j, thr):
    """Interpolated time where ``a`` crosses ``thr`` between samples i and j."""
    if a[j] == a[i]:
        return float(t[j])
    return float(t[i] + (thr - a[i]) * (t[j] - t[i]) / (a[j] - a[i]))


def _excursions(t, a, thr):
    """Maximal runs of samples with ``a > thr`` as (first, last) index pairs."""
    above = a > thr
    if not np.any(above):
        return []
    edges = np.diff(np.concatenate([[0], above.astype(int), [0]]))
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0] - 1
    return list(zip(starts, stops))


def _check_uniform(t):
    if len(t) < 2:
        return
    dt = np.diff(t)
    if np.any(np.abs(dt - dt[0]) > 1e-6 * max(dt[0], 1e-12) + 1e-9):
        raise InvalidInputError("power stream timeline is not uniform")


def detect_actions(t, power, config=None, agent=1, threshold=None):
    """Segment push-pull actions of one agent from its power trace.

    Peaks of ``|P|`` above the threshold are collected per above-threshold
    excursion.  Excursions separated by less than ``merge_window`` are merged,
    a segment whose peak follows the previous peak by less than
    ``min_peak_separation`` is dropped, and segments shorter than
    ``min_action_duration`` are discarded.  Onset and offset are the
    interpolated threshold crossings around the merged excursion.
    """
    config = config or SegmenterConfig()
    t = np.asarray(t, dtype=float)
    p = np.asarray(power, dtype=float)
    if len(t) != len(p):
        raise InvalidInputError("time and power differ in length")
    _check_uniform(t)
    thr = resolve_threshold(p, config) if threshold is None else float(threshold)
    a = np.abs(p)
    runs = _excursions(t, a, thr)
    groups = []
    for i, j in runs:
        on = _crossing(t, a, i - 1, i, thr) if i > 0 else float(t[i])
        off = _crossing(t, a, j, j + 1, thr) if j + 1 < len(t) else float(t[j])
        if groups and on - groups[-1][3] < config.merge_window:
            groups[-1][1] = j
            groups[-1][3] = off
        else:
            groups.append([i, j, on, off])
    segments = []
    last_peak = -np.inf
    for i, j, on, off in groups:
        k = i + int(np.argmax(a[i:j + 1]))
        t_peak = float(t[k])
        if t_peak - last_peak < config.min_peak_separation:
            continue
        if off - on < config.min_action_duration:
            continue
        last_peak = t_peak
        segments.append(_segment(agent, on, t_peak, off, float(p[k])))
    return segments


def _segment(agent, on, t_peak, off, peak_power):
    # a peak on the first sample still gets an onset strictly before it
    if on >= t_peak:
        on = t_peak - 1e-9
    return ActionSegment(agent=agent, t_on=on, t_peak=t_peak, t_off=max(off, t_peak), peak_power=peak_power)


def segment_session(power_features, config=None):
    """Detect actions of both agents with one shared session threshold."""
    config = config or SegmenterConfig()
    thr = resolve_threshold(np.vstack([power_features.p1, power_features.p2]), config)
    segs = []
    for agent in (1, 2):
        segs += detect_actions(power_features.t, power_features.power(agent), config, agent, thr)
    segs.sort(key=lambda s: (s.t_on, s.agent))
    return segs, thr


class StreamingActionDetector:
    """Causal counterpart of :func:`detect_actions` for a fixed threshold.

    Feed samples with :meth:`update`; a segment is returned once no merge can
    extend it any more, i.e. ``merge_window`` after its offset.
    """

    def __init__(self, threshold, config=None, agent=1):
        self.config = config or SegmenterConfig()
        self.threshold = float(threshold)
        self.agent = agent
        self._prev = None
        self._open = None       # [on, peak_t, peak_p, peak_a, off]
        self._pending = None
        self._last_peak = -np.inf

    def _finalize(self, g):
        on, t_peak, p_peak, _, off = g
        if t_peak - self._last_peak < self.config.min_peak_separation:
            return None
        if off - on < self.config.min_action_duration:
            return None
        self._last_peak = t_peak
        return _segment(self.agent, on, t_peak, off, p_peak)

    def update(self, t, p):
        out = []
        a = abs(p)
        thr = self.threshold
        if self._pending is not None and self._open is None and t - self._pending[4] >= self.config.merge_window:
            seg = self._finalize(self._pending)
            self._pending = None
            if seg is not None:
                out.append(seg)
        if a > thr:
            if self._open is None:
                if self._prev is not None:
                    on = _crossing(np.array([self._prev[0], t]), np.array([abs(self._prev[1]), a]), 0, 1, thr)
                else:
                    on = t
                if self._pending is not None and on - self._pending[4] < self.config.merge_window:
                    self._open = self._pending
                    self._pending = None
                else:
                    if self._pending is not None:
                        seg = self._finalize(self._pending)
                        self._pending = None
                        if seg is not None:
                            out.append(seg)
                    self._open = [on, t, p, a, t]
            if a > self._open[3]:
                self._open[1:4] = [t, p, a]
        elif self._open is not None:
            pt, pp = self._prev
            self._open[4] = _crossing(np.array([pt, t]), np.array([abs(pp), a]), 0, 1, thr)
            self._pending = self._open
            self._open = None
        self._prev = (t, p)
        return out

    def flush(self):
        out = []
        if self._open is not None:
            self._open[4] = self._prev[0]
            self._pending, self._open = self._open, None
        if self._pending is not None:
            seg = self._finalize(self._pending)
            self._pending = None
            if seg is not None:
                out.append(seg)
        return out


# --------------------------------------------------------------------------
# phase split
# --------------------------------------------------------------------------

@dataclass
class Window:
    t0: float
    t1: float
    segments: list

    @property
    def empty(self):
        return self.t1 <= self.t0

    def mask(self, t):
        t = np.asarray(t, dtype=float)
        return (t >= self.t0 - 1e-9) & (t <= self.t1 + 1e-9) if not self.empty else np.zeros(len(t), bool)


def phase_split(t, segments, boundary):
    """Split a session into negotiation ``[t_start, t_dec]`` and execution windows.

    An action belongs to the negotiation window iff its peak falls inside it.
    Without consensus the negotiation window runs to the end of the session.
    """
    t = np.asarray(t, dtype=float)
    lo, hi = float(t[0]), float(t[-1])
    if not lo - 1e-9 <= boundary.t_start <= hi + 1e-9:
        raise InvalidInputError("t_start lies outside the session")
    t_dec = hi if boundary.t_dec is None else boundary.t_dec
    if not boundary.t_start - 1e-9 <= t_dec <= hi + 1e-9:
        raise InvalidInputError("t_dec lies outside the session")
    neg = [s for s in segments if boundary.t_start <= s.t_peak <= t_dec]
    exe = [s for s in segments if s.t_peak > t_dec]
    return Window(boundary.t_start, t_dec, neg), Window(t_dec, hi, exe)


class ActionSegmenter(BaseEstimator):
    """Estimator wrapper: ``fit`` fixes the session threshold, ``predict`` segments.

    ``X`` is a :class:`~dyadic_intent.features.PowerFeatures`.
    """

    def __init__(self, power_threshold=None, power_floor=0.5, power_fraction=0.2,
                 min_peak_separation=0.15, merge_window=0.25, min_action_duration=0.1):
        self.power_threshold = power_threshold
        self.power_floor = power_floor
        self.power_fraction = power_fraction
        self.min_peak_separation = min_peak_separation
        self.merge_window = merge_window
        self.min_action_duration = min_action_duration

    def _config(self):
        return SegmenterConfig(power_threshold=self.power_threshold, power_floor=self.power_floor,
                               power_fraction=self.power_fraction,
                               min_peak_separation=self.min_peak_separation,
                               merge_window=self.merge_window,
                               min_action_duration=self.min_action_duration)

    def fit(self, X, y=None):
        self.config_ = self._config()
        self.threshold_ = resolve_threshold(np.vstack([X.p1, X.p2]), self.config_)
        return self

    def predict(self, X):
        if not hasattr(self, "threshold_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("ActionSegmenter is not fitted")
        segs = []
        for agent in (1, 2):
            segs += detect_actions(X.t, X.power(agent), self.config_, agent, self.threshold_)
        segs.sort(key=lambda s: (s.t_on, s.agent))
        return segs

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
