"""Goal taxonomy, per-action intent features and the LDA intent classifier."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InvalidInputError, SchemaError, UndefinedScoreError
from .kinematics import goal_directions

MODEL_HEADER = "dyadic-intent-model"
MODEL_VERSION = 1


# --------------------------------------------------------------------------
# taxonomy
# --------------------------------------------------------------------------

class GoalKind(enum.Enum):
    NO_GOAL = "NoGoal"
    SOFT = "Soft"
    HARD = "Hard"


@dataclass(frozen=True)
class AgentGoal:
    """One agent's private goal: ``NoGoal``, ``Soft(i)`` or ``Hard(i)``."""

    kind: GoalKind
    index: int | None = None

    def __post_init__(self):
        if self.kind is GoalKind.NO_GOAL:
            if self.index is not None:
                raise InvalidInputError("NoGoal carries no goal index")
        elif not isinstance(self.index, (int, np.integer)) or self.index < 1:
            raise InvalidInputError(f"{self.kind.value} goal needs an index >= 1")

    @classmethod
    def no_goal(cls):
        return cls(GoalKind.NO_GOAL)

    @classmethod
    def soft(cls, i):
        return cls(GoalKind.SOFT, int(i))

    @classmethod
    def hard(cls, i):
        return cls(GoalKind.HARD, int(i))

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if text == "NoGoal":
            return cls.no_goal()
        for kind, prefix in ((GoalKind.SOFT, "S"), (GoalKind.HARD, "H")):
            for p in (kind.value, prefix):
                if text.startswith(p + "(") and text.endswith(")"):
                    return cls(kind, int(text[len(p) + 1:-1]))
                if p == prefix and text.startswith(p) and text[1:].isdigit():
                    return cls(kind, int(text[1:]))
        raise InvalidInputError(f"cannot parse goal {text!r}")

    def __str__(self):
        return "NoGoal" if self.kind is GoalKind.NO_GOAL else f"{self.kind.value}({self.index})"

    @property
    def has_goal(self):
        return self.kind is not GoalKind.NO_GOAL


@dataclass(frozen=True)
class GoalAssignment:
    agent1: AgentGoal
    agent2: AgentGoal

    def validate(self, n_goals):
        for g in (self.agent1, self.agent2):
            if g.has_goal and not 1 <= g.index <= n_goals:
                raise InvalidInputError(f"goal index {g.index} outside 1..{n_goals}")
        return self

    def __iter__(self):
        return iter((self.agent1, self.agent2))


class InteractionType(enum.Enum):
    KCG = "KCG"
    NO_GOAL_BOTH = "NoGoalVsNoGoal"
    NO_GOAL_VS_SOFT = "NoGoalVsSoft"
    NO_GOAL_VS_HARD = "NoGoalVsHard"
    NON_CONFLICTING_HH = "NonConflictingHH"
    NON_CONFLICTING_HS = "NonConflictingHS"
    NON_CONFLICTING_SS = "NonConflictingSS"
    CONFLICTING_HS = "ConflictingHS"
    CONFLICTING_SS = "ConflictingSS"
    CONFLICTING_HH = "ConflictingHH"

    @property
    def resolvable(self):
        return self is not InteractionType.CONFLICTING_HH

    @property
    def conflicting(self):
        return self in (InteractionType.CONFLICTING_HS, InteractionType.CONFLICTING_SS,
                        InteractionType.CONFLICTING_HH)

    @classmethod
    def parse(cls, text):
        for t in cls:
            if t.value == text or t.name == text:
                return t
        raise InvalidInputError(f"unknown interaction type {text!r}")


# the eight cells studied with human dyads
SUPPORTED_CELLS = (
    InteractionType.KCG,
    InteractionType.NO_GOAL_VS_SOFT,
    InteractionType.NO_GOAL_VS_HARD,
    InteractionType.NON_CONFLICTING_HH,
    InteractionType.NON_CONFLICTING_HS,
    InteractionType.NON_CONFLICTING_SS,
    InteractionType.CONFLICTING_HS,
    InteractionType.CONFLICTING_SS,
)


def interaction_type(assignment, kcg=False):
    """Taxonomy cell of a goal assignment."""
    if kcg:
        return InteractionType.KCG
    a, b = assignment.agent1, assignment.agent2
    if not a.has_goal and not b.has_goal:
        return InteractionType.NO_GOAL_BOTH
    if not a.has_goal or not b.has_goal:
        leader = a if a.has_goal else b
        return (InteractionType.NO_GOAL_VS_HARD if leader.kind is GoalKind.HARD
                else InteractionType.NO_GOAL_VS_SOFT)
    hard = sum(g.kind is GoalKind.HARD for g in (a, b))
    if a.index == b.index:
        return (InteractionType.NON_CONFLICTING_SS, InteractionType.NON_CONFLICTING_HS,
                InteractionType.NON_CONFLICTING_HH)[hard]
    return (InteractionType.CONFLICTING_SS, InteractionType.CONFLICTING_HS,
            InteractionType.CONFLICTING_HH)[hard]


# --------------------------------------------------------------------------
# per-action features
# --------------------------------------------------------------------------

PER_GOAL_FEATURES = ("mean_pproj", "peak_pproj", "mean_fproj", "impulse_fproj", "displacement")
GLOBAL_FEATURES = ("duration", "peak_abs_power", "mean_force_norm")


def feature_names(n_goals):
    names = [f"{name}_g{i}" for i in range(1, n_goals + 1) for name in PER_GOAL_FEATURES]
    return names + list(GLOBAL_FEATURES)


def _window(t, values, t0, t1):
    """Samples of ``values`` on ``[t0, t1]`` with interpolated end points."""
    inner = (t > t0) & (t < t1)
    tw = np.concatenate([[t0], t[inner], [t1]])
    if values.ndim == 1:
        vw = np.interp(tw, t, values)
    else:
        vw = np.column_stack([np.interp(tw, t, values[:, j]) for j in range(values.shape[1])])
    return tw, vw


def extract_features(segment, fused, layout):
    """Aggregate one agent's goal-projected signals over ``[t_on, t_off]``.

    Returns a vector laid out as :func:`feature_names`.  Goal directions come
    from the object position at each tick, like the per-tick features.
    """
    t0, t1 = float(segment.t_on), float(segment.t_off)
    if not t1 > t0:
        raise InvalidInputError("action window has zero length")
    if t0 < fused.t[0] - 1e-9 or t1 > fused.t[-1] + 1e-9:
        raise InvalidInputError("action window lies outside the stream")
    f = fused.force(segment.agent)
    v = fused.handle_velocity(segment.agent)
    stacked = np.hstack([f, v, fused.position[:, :2]])
    tw, w = _window(fused.t, stacked, t0, t1)
    fw, vw, pw = w[:, 0:3], w[:, 3:6], w[:, 6:8]
    duration = t1 - t0
    all_dirs = goal_directions(pw, layout)
    feats = []
    for i in range(1, layout.n_goals + 1):
        dirs = all_dirs[:, i - 1, :]
        fp = np.sum(fw[:, :2] * dirs, axis=1)
        vp = np.sum(vw[:, :2] * dirs, axis=1)
        pp = fp * vp
        impulse = float(np.trapezoid(fp, tw))
        feats += [
            float(np.trapezoid(pp, tw)) / duration,
            float(pp[np.argmax(np.abs(pp))]),
            impulse / duration,
            impulse,
            float(np.dot(pw[-1] - pw[0], dirs[0])),
        ]
    # horizontal components only, so the vector is reproducible from processed.csv
    power = np.sum(fw[:, :2] * vw[:, :2], axis=1)
    feats += [duration, float(np.max(np.abs(power))),
              float(np.trapezoid(np.linalg.norm(fw[:, :2], axis=1), tw)) / duration]
    out = np.asarray(feats)
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("non-finite action feature")
    return out


# --------------------------------------------------------------------------
# LDA model
# --------------------------------------------------------------------------

@dataclass
class IntentModel:
    """Standardisation, 2-D discriminant projection and class centroids."""

    classes: np.ndarray        # (C,) goal indices, ascending
    mean: np.ndarray           # (d,)
    scale: np.ndarray          # (d,)
    projection: np.ndarray     # (d, 2)
    centroids: np.ndarray      # (C, 2)
    eigenvalues: np.ndarray    # (2,)

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.mean):
            raise InvalidInputError(f"expected {len(self.mean)} features, got {X.shape[1]}")
        return ((X - self.mean) / self.scale) @ self.projection

    def squared_distances(self, X):
        Z = self.transform(X)
        return np.sum((Z[:, None, :] - self.centroids[None, :, :]) ** 2, axis=2)

    def save(self, path):
        Path(path).write_text(dumps_model(self), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return loads_model(Path(path).read_text(encoding="utf-8"))


def fit_lda(features, labels, n_components=2, regularization=1e-6):
    """Fit standardised Fisher LDA and store class centroids.

    The within-class scatter gets ``regularization * trace(S_w) / d`` added to
    its diagonal so rank-deficient batches still solve.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise InvalidInputError("features must be (n_samples, n_features) matching labels")
    if X.shape[1] < 2:
        raise InvalidInputError("need at least two features")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("features contain non-finite values")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise InvalidInputError("need at least two classes")
    if np.any(counts < 2):
        raise InvalidInputError("every class needs at least two samples")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    d = Z.shape[1]
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    mu = Z.mean(axis=0)
    for c in classes:
        Zc = Z[y == c]
        mc = Zc.mean(axis=0)
        D = Zc - mc
        Sw += D.T @ D
        Sb += len(Zc) * np.outer(mc - mu, mc - mu)
    tr = np.trace(Sw)
    if not tr > 0:
        raise InvalidInputError("within-class scatter is singular (all classes collapse to points)")
    Sw += regularization * tr / d * np.eye(d)
    evals, evecs = linalg.eigh(Sb, Sw)
    order = np.argsort(evals)[::-1][:n_components]
    W = evecs[:, order]
    # deterministic orientation of each axis
    for j in range(W.shape[1]):
        k = np.argmax(np.abs(W[:, j]))
        if W[k, j] < 0:
            W[:, j] = -W[:, j]
    model = IntentModel(classes=classes.astype(int), mean=mean, scale=scale, projection=W,
                        centroids=np.zeros((len(classes), W.shape[1])), eigenvalues=evals[order])
    proj = Z @ W
    model.centroids = np.array([proj[y == c].mean(axis=0) for c in classes])
    diffs = model.centroids[:, None, :] - model.centroids[None, :, :]
    dist = np.linalg.norm(diffs, axis=2) + np.eye(len(classes))
    if np.any(dist == 0):
        raise InvalidInputError("class centroids coincide in the reduced space")
    return model


def _softmin(sq, temperature=1.0):
    s = -np.asarray(sq, dtype=float) / temperature
    s -= s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def classify(model, feature, temperature=1.0):
    """Nearest reduced-space centroid; ties go to the lowest goal index.

    Returns ``(goal, confidence)`` with confidence the softmin weight of the
    winning class.
    """
    if model is None:
        raise NotFittedError("intent model is not fitted")
    sq = model.squared_distances(np.atleast_2d(feature))[0]
    k = int(np.argmin(sq))
    return int(model.classes[k]), float(_softmin(sq, temperature)[k])


class IntentClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """LDA + nearest-centroid intent classifier.

    ``transform`` gives the 2-D embedding, ``predict`` the goal index,
    ``predict_proba`` the softmin weights over ``classes_``.
    """

    def __init__(self, n_components=2, regularization=1e-6, temperature=1.0):
        self.n_components = n_components
        self.regularization = regularization
        self.temperature = temperature

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.model_ = fit_lda(X, y, self.n_components, self.regularization)
        self.classes_ = self.model_.classes
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model):
        clf = cls()
        clf.model_ = model
        clf.classes_ = model.classes
        clf.n_features_in_ = len(model.mean)
        return clf

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.transform(check_array(X))

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return _softmin(self.model_.squared_distances(check_array(X)), self.temperature)

    def predict(self, X):
        check_is_fitted(self, "model_")
        sq = self.model_.squared_distances(check_array(X))
        return self.classes_[np.argmin(sq, axis=1)]


# --------------------------------------------------------------------------
# model text format
# --------------------------------------------------------------------------

def _block(name, M):
    M = np.atleast_2d(M)
    rows = [" ".join(repr(float(x)) for x in row) for row in M]
    return [f"{name} {M.shape[0]} {M.shape[1]}"] + rows


def dumps_model(model):
    """Serialise to the versioned plain-text format.

    Line 1 is ``dyadic-intent-model 1``; then one block per array, each a
    ``<name> <rows> <cols>`` header followed by row-major values.
    """
    lines = [f"{MODEL_HEADER} {MODEL_VERSION}"]
    lines += _block("classes", model.classes.astype(float)[None, :])
    lines += _block("mean", model.mean[None, :])
    lines += _block("scale", model.scale[None, :])
    lines += _block("projection", model.projection)
    lines += _block("centroids", model.centroids)
    lines += _block("eigenvalues", model.eigenvalues[None, :])
    return "\n".join(lines) + "\n"


def loads_model(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != MODEL_HEADER:
        raise SchemaError("not an intent model file")
    if head[1] != str(MODEL_VERSION):
        raise SchemaError(f"unsupported model version {head[1]}")
    blocks = {}
    i = 1
    try:
        while i < len(lines):
            name, r, c = lines[i].split()
            r, c = int(r), int(c)
            rows = [[float(x) for x in lines[i + 1 + k].split()] for k in range(r)]
            blocks[name] = np.array(rows, dtype=float).reshape(r, c)
            i += 1 + r
    except (ValueError, IndexError):
        raise SchemaError(f"malformed model block near line {i + 1}") from None
    try:
        return IntentModel(
            classes=blocks["classes"][0].astype(int), mean=blocks["mean"][0],
            scale=blocks["scale"][0], projection=blocks["projection"],
            centroids=blocks["centroids"], eigenvalues=blocks["eigenvalues"][0],
        )
    except KeyError as exc:
        raise SchemaError(f"model file lacks block {exc.args[0]!r}") from None


# --------------------------------------------------------------------------
# clustering validity
# --------------------------------------------------------------------------

def _validate_clusters(points, labels):
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels)
    if len(X) != len(y):
        raise InvalidInputError("points and labels differ in length")
    classes = np.unique(y)
    if len(X) < 3:
        raise InvalidInputError("need at least three points")
    if len(classes) < 2:
        raise InvalidInputError("need at least two clusters")
    return X, y, classes


def silhouette(points, labels):
    X, y, classes = _validate_clusters(points, labels)
    if len(classes) == len(X):
        raise UndefinedScoreError("silhouette is undefined when every cluster is a singleton")
    D = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    member = np.stack([y == c for c in classes], axis=1)      # (n, k)
    sizes = member.sum(axis=0)
    sums = D @ member                                          # (n, k)
    own = np.argmax(member, axis=1)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(len(X)), own] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes
    means[np.arange(len(X)), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def calinski_harabasz(points, labels):
    X, y, classes = _validate_clusters(points, labels)
    n, k = len(X), len(classes)
    if n <= k:
        raise UndefinedScoreError("Calinski-Harabasz needs more points than clusters")
    mu = X.mean(axis=0)
    between = within = 0.0
    for c in classes:
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        between += len(Xc) * float(np.sum((mc - mu) ** 2))
        within += float(np.sum((Xc - mc) ** 2))
    if within == 0.0:
        return np.inf if between > 0 else 0.0
    return (between / (k - 1)) / (within / (n - k))


def davies_bouldin(points, labels):
    X, y, classes = _validate_clusters(points, labels)
    cents = np.array([X[y == c].mean(axis=0) for c in classes])
    spread = np.array([np.mean(np.linalg.norm(X[y == c] - m, axis=1)) for c, m in zip(classes, cents)])
    dist = np.linalg.norm(cents[:, None, :] - cents[None, :, :], axis=2)
    k = len(classes)
    worst = np.zeros(k)
    for i in range(k):
        r = []
        for j in range(k):
            if i == j:
                continue
            s = spread[i] + spread[j]
            r.append(0.0 if s == 0 else (np.inf if dist[i, j] == 0 else s / dist[i, j]))
        worst[i] = max(r)
    return float(worst.mean())


def clustering_scores(points, labels):
    """``(calinski_harabasz, davies_bouldin, silhouette)`` of a labeled embedding."""
    return calinski_harabasz(points, labels), davies_bouldin(points, labels), silhouette(points, labels)
