"""End-to-end session analysis and evaluation helpers."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataio
from .exceptions import ConfigError, SchemaError
from .features import DEFAULT_DEADBAND, compute_power_features
from .fusion import FilterConfig, align
from .intent import InteractionType, classify, extract_features
from .kinematics import GoalLayout, HandleGeometry
from .segmentation import (
    SegmenterConfig,
    detect_negotiation_end,
    phase_split,
    segment_session,
    settled_goal,
)


@dataclass
class FeatureConfig:
    force_deadband: float = DEFAULT_DEADBAND[0]
    velocity_deadband: float = DEFAULT_DEADBAND[1]

    def __post_init__(self):
        if self.force_deadband < 0 or self.velocity_deadband < 0:
            raise ConfigError("deadbands must be non-negative")


@dataclass
class AnalysisConfig:
    filter: FilterConfig = field(default_factory=FilterConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def echo(self):
        return {name: asdict(getattr(self, name)) for name in ("filter", "segmenter", "features")}


@dataclass
class SessionContext:
    """What the analysis needs to know about a recording besides its streams."""

    t_start: float
    layout: GoalLayout = field(default_factory=GoalLayout.circular)
    geometry: HandleGeometry = field(default_factory=HandleGeometry)
    mounts: tuple = ((1.0, 0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0))
    session_id: str = ""
    cell: Optional[InteractionType] = None


@dataclass
class SessionReport:
    context: SessionContext
    fused: object
    power: object
    segments: list
    threshold: float
    boundary: object
    negotiation: object
    execution: object

    def to_record(self):
        rec = {
            "session_id": self.context.session_id,
            "interaction_type": self.context.cell.value if self.context.cell else None,
            "threshold_W": self.threshold,
            "boundary": self.boundary.to_record(),
            "n_actions": len(self.segments),
            "n_negotiation_actions": len(self.negotiation.segments),
            "n_execution_actions": len(self.execution.segments),
            "actions": [
                {"agent": s.agent, "t_on": s.t_on, "t_peak": s.t_peak, "t_off": s.t_off,
                 "peak_power": s.peak_power, "classified_goal": s.classified_goal,
                 "confidence": s.confidence, "phase": "negotiation" if s in self.negotiation.segments
                 else ("execution" if s in self.execution.segments else "pre-start")}
                for s in self.segments
            ],
        }
        return rec


def analyze(raw, context, config=None, model=None):
    """Run fusion, power features, segmentation, boundary detection and classification."""
    config = config or AnalysisConfig()
    fused = align(raw, config.filter, context.geometry, context.mounts)
    deadband = (config.features.force_deadband, config.features.velocity_deadband)
    pf = compute_power_features(fused, context.layout, deadband)
    segments, thr = segment_session(pf, config.segmenter)
    goal = settled_goal(fused.position, context.layout)
    t_start = min(max(context.t_start, float(fused.t[0])), float(fused.t[-1]))
    boundary = detect_negotiation_end(fused.t, fused.position, fused.linear_velocity, context.layout,
                                      goal, config.segmenter, t_start)
    for s in segments:
        s.features = extract_features(s, fused, context.layout)
        if model is not None:
            s.classified_goal, s.confidence = classify(model, s.features)
    neg, exe = phase_split(fused.t, segments, boundary)
    return SessionReport(context, fused, pf, segments, thr, boundary, neg, exe)


# --------------------------------------------------------------------------
# sessions on disk
# --------------------------------------------------------------------------

def _floats(text, key):
    try:
        return [float(x) for x in text.replace(";", " ").split()]
    except ValueError:
        raise SchemaError(f"session.ini: cannot parse {key}") from None


def load_context(directory):
    cp = dataio.read_session_manifest(directory)
    sec = cp["session"]
    try:
        t_start = float(sec["t_start"])
    except ValueError:
        raise SchemaError("session.ini: t_start is not a number") from None
    ctx = SessionContext(t_start=t_start, session_id=sec.get("id", Path(directory).name))
    cell = sec.get("cell", "").strip()
    if cell:
        ctx.cell = InteractionType.parse(cell)
    if cp.has_section("scene"):
        sc = cp["scene"]
        if "layout.goals" in sc:
            g = np.array(_floats(sc["layout.goals"], "layout.goals")).reshape(-1, 2)
            ctx.layout = GoalLayout(g)
        if "obj.handles.q1" in sc and "obj.handles.q2" in sc:
            ctx.geometry = HandleGeometry(np.array(_floats(sc["obj.handles.q1"], "q1")),
                                          np.array(_floats(sc["obj.handles.q2"], "q2")))
    if cp.has_section("mounts"):
        m = cp["mounts"]
        ctx.mounts = (tuple(_floats(m.get("ft1", "1 0 0 0"), "ft1")), tuple(_floats(m.get("ft2", "1 0 0 0"), "ft2")))
    return ctx


ANALYSIS_FILES = ("processed.csv", "features.csv", "segments.csv", "boundary.json", "report.json")


def analyze_session(directory, config=None, model=None, out_dir=None):
    """Analyse one session directory and write all derived artifacts.

    Re-running on the same inputs rewrites byte-identical files.
    """
    d = Path(directory)
    out = Path(out_dir) if out_dir is not None else d
    out.mkdir(parents=True, exist_ok=True)
    config = config or AnalysisConfig()
    ctx = load_context(d)
    raw = dataio.read_raw(d)
    report = analyze(raw, ctx, config, model)
    dataio.write_processed(report.fused, out / "processed.csv")
    dataio.write_features(report.power, out / "features.csv")
    dataio.write_segments(report.segments, out / "segments.csv")
    dataio.write_boundary(report.boundary, out / "boundary.json",
                          {"session_id": ctx.session_id,
                           "interaction_type": ctx.cell.value if ctx.cell else None})
    rec = report.to_record()
    rec["config"] = config.echo()
    (out / "report.json").write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def dataset_sessions(directory):
    """Session directories listed in a dataset ``manifest.ini``, in order."""
    d = Path(directory)
    cp = dataio.read_ini(d / "manifest.ini")
    if not cp.has_section("dataset"):
        raise SchemaError("manifest.ini: missing [dataset] section")
    version = cp["dataset"].get("schema_version")
    if version is None or version.strip() != str(dataio.SCHEMA_VERSION):
        raise SchemaError(f"manifest.ini: unsupported schema_version {version!r}")
    out = []
    for name in cp.sections():
        if name == "dataset":
            continue
        out.append((name, d / cp[name].get("path", name), dict(cp[name])))
    return out


# --------------------------------------------------------------------------
# evaluation against ground truth
# --------------------------------------------------------------------------

def interval_iou(a0, a1, b0, b1):
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = max(a1, b1) - min(a0, b0)
    return inter / union if union > 0 else 0.0


def match_epochs(segments, epochs, min_iou=0.5):
    """Greedy one-to-one matching of detected segments to truth epochs.

    Pairs must share the agent and reach ``min_iou``; higher IoU pairs are
    taken first.  Returns a list of ``(segment_index, epoch_index, iou)``.
    """
    cand = []
    for i, s in enumerate(segments):
        for j, e in enumerate(epochs):
            if s.agent != e.agent:
                continue
            iou = interval_iou(s.t_on, s.t_off, e.t_on, e.t_off)
            if iou >= min_iou:
                cand.append((-iou, i, j))
    cand.sort()
    used_s, used_e, out = set(), set(), []
    for neg, i, j in cand:
        if i in used_s or j in used_e:
            continue
        used_s.add(i)
        used_e.add(j)
        out.append((i, j, -neg))
    out.sort()
    return out


def precision_recall(n_matched, n_detected, n_truth):
    precision = n_matched / n_detected if n_detected else 1.0
    recall = n_matched / n_truth if n_truth else 1.0
    return precision, recall


def labelled_actions(report, epochs, agents=None, min_iou=0.5):
    """Feature rows and goal labels of detected actions matched to truth epochs."""
    segs = report.segments
    X, y = [], []
    for i, j, _ in match_epochs(segs, epochs, min_iou):
        if agents is not None and segs[i].agent not in agents:
            continue
        segs[i].label = epochs[j].goal
        X.append(segs[i].features)
        y.append(epochs[j].goal)
    return X, y


def interaction_signature(report):
    """Opposition and concession as read from the detected negotiation actions.

    Each active negotiation action (positive peak power) claims the goal its
    mean projected force points at most.  Opposition: the two agents claim
    different goals.  Concession: some agent claimed a goal other than the
    one the object settled at.
    """
    from .intent import feature_names
    n = report.context.layout.n_goals
    names = feature_names(n)
    cols = [names.index(f"mean_fproj_g{i}") for i in range(1, n + 1)]
    claims = {1: set(), 2: set()}
    for s in report.negotiation.segments:
        if s.peak_power > 0 and s.features is not None:
            claims[s.agent].add(int(np.argmax(np.asarray(s.features)[cols])) + 1)
    opposition = bool(claims[1] and claims[2] and claims[1] != claims[2])
    settled = report.boundary.settled_goal
    concession = any(g != settled for c in claims.values() for g in c)
    return {"opposition": opposition, "concession": concession, "claims": claims}
