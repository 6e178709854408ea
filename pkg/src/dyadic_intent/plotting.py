"""Deterministic SVG figures of analysed sessions.

Each function returns the series it drew so callers can check plotted data
without parsing the SVG.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .exceptions import InvalidInputError

_RC = {"svg.hashsalt": "dyadic-intent", "svg.fonttype": "path", "font.family": "DejaVu Sans"}
AGENT_COLORS = ("tab:blue", "tab:orange")
GOAL_COLORS = ("tab:green", "tab:red", "tab:purple", "tab:brown", "tab:pink", "tab:gray")


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        FigureCanvasSVG(fig)
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def _shade(ax, segments, agent=None):
    for s in segments:
        if agent is not None and s.agent != agent:
            continue
        ax.axvspan(s.t_on, s.t_off, color=AGENT_COLORS[s.agent - 1], alpha=0.15, lw=0)


def plot_power(power, segments, path, boundary=None):
    """Per-agent power with the summed power on top and shaded actions."""
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(8, 3.5))
        ax = fig.add_subplot(1, 1, 1)
        _shade(ax, segments)
        ax.plot(power.t, power.p1, color=AGENT_COLORS[0], lw=1.0, label="P1")
        ax.plot(power.t, power.p2, color=AGENT_COLORS[1], lw=1.0, label="P2")
        ax.plot(power.t, power.p_sum, color="k", lw=0.8, ls="--", label="P sum")
        ax.axhline(0.0, color="0.6", lw=0.5)
        if boundary is not None:
            ax.axvline(boundary.t_start, color="0.4", lw=0.8, ls=":")
            if boundary.t_dec is not None:
                ax.axvline(boundary.t_dec, color="k", lw=0.8, ls=":")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("power (W)")
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        _save(fig, path)
    return {"t": power.t, "p1": power.p1, "p2": power.p2, "p_sum": power.p_sum,
            "regions": [(s.agent, s.t_on, s.t_off) for s in segments]}


def plot_projected(power, segments, path):
    """Goal-projected force, velocity and power, one column per agent."""
    N = power.n_goals
    rows = (("f_proj", "force (N)"), ("v_proj", "velocity (m/s)"), ("p_proj", "power (W)"))
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(10, 7))
        axes = fig.subplots(3, 2, sharex=True)
        for k in range(2):
            for r, (name, label) in enumerate(rows):
                ax = axes[r, k]
                _shade(ax, segments, agent=k + 1)
                data = getattr(power, name)[:, k, :]
                for i in range(N):
                    ax.plot(power.t, data[:, i], color=GOAL_COLORS[i % len(GOAL_COLORS)], lw=0.9,
                            label=f"goal {i + 1}")
                ax.axhline(0.0, color="0.6", lw=0.5)
                if k == 0:
                    ax.set_ylabel(label)
                if r == 0:
                    ax.set_title(f"agent {k + 1}")
            axes[2, k].set_xlabel("time (s)")
        axes[0, 1].legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        _save(fig, path)
    return {"t": power.t, "f_proj": power.f_proj, "v_proj": power.v_proj, "p_proj": power.p_proj,
            "regions": [(s.agent, s.t_on, s.t_off) for s in segments]}


def embed(features, model=None):
    """2-D embedding: the model's discriminant space, else the first two principal axes."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if model is not None:
        return model.transform(X)
    if len(X) == 0:
        return np.zeros((0, 2))
    Z = X - X.mean(axis=0)
    sd = Z.std(axis=0)
    Z = Z / np.where(sd > 0, sd, 1.0)
    _, _, vt = np.linalg.svd(Z, full_matrices=False)
    # fix the sign so the output does not depend on the LAPACK build
    vt = vt * np.where(vt[np.arange(len(vt)), np.argmax(np.abs(vt), axis=1)] < 0, -1.0, 1.0)[:, None]
    out = np.zeros((len(X), 2))
    k = min(2, vt.shape[0])
    out[:, :k] = Z @ vt[:k].T
    return out


def plot_embedding(points, labels, path, title=None):
    """Scatter of reduced-space points coloured by class label."""
    P = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 2)
    labels = np.asarray(labels)
    if len(labels) != len(P):
        raise InvalidInputError("points and labels differ in length")
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(5, 5))
        ax = fig.add_subplot(1, 1, 1)
        for j, c in enumerate(sorted(set(labels.tolist()))):
            m = labels == c
            ax.scatter(P[m, 0], P[m, 1], s=14, color=GOAL_COLORS[j % len(GOAL_COLORS)], label=str(c))
        if len(P) == 0:
            ax.text(0.5, 0.5, "no actions", ha="center", va="center", transform=ax.transAxes)
        else:
            ax.legend(loc="best", fontsize=8)
        ax.set_xlabel("component 1")
        ax.set_ylabel("component 2")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
    return {"points": P, "labels": labels}


def plot_session(directory, kinds=("power", "projected", "embedding"), model=None, out_dir=None):
    """Figures for an analysed session directory; returns ``{kind: path}``."""
    from . import dataio
    d = Path(directory)
    out = Path(out_dir) if out_dir is not None else d
    power = dataio.read_features(d / "features.csv")
    segments = dataio.read_segments(d / "segments.csv")
    boundary, _ = dataio.read_boundary(d / "boundary.json")
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if "power" in kinds:
        paths["power"] = out / "plot_power.svg"
        plot_power(power, segments, paths["power"], boundary)
    if "projected" in kinds:
        paths["projected"] = out / "plot_projected.svg"
        plot_projected(power, segments, paths["projected"])
    if "embedding" in kinds:
        from .intent import extract_features
        from .pipeline import load_context
        ctx = load_context(d)
        fused = dataio.read_processed(d / "processed.csv")
        feats = [extract_features(s, fused, ctx.layout) for s in segments]
        pts = embed(np.array(feats), model) if feats else np.zeros((0, 2))
        if model is not None:
            from .intent import classify
            labels = [classify(model, f)[0] for f in feats]
            title = "discriminant space"
        else:
            labels = [s.agent for s in segments]
            title = "principal axes (by agent)"
        paths["embedding"] = out / "plot_embedding.svg"
        plot_embedding(pts, labels, paths["embedding"], title)
    return paths
