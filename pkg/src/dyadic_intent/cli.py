"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 bad or missing
input data, 3 internal error.
"""
from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import dataio
from .config import load_analysis_config, load_simulation_config
from .exceptions import ConfigError, DyadicIntentError, InvalidInputError, SchemaError
from .intent import AgentGoal, GoalKind, IntentModel, classify, extract_features, fit_lda
from .pipeline import analyze_session, dataset_sessions, load_context, match_epochs
from .stats import NegotiationSample, anova, negotiation_summary, tukey_hsd

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

SUMMARY_COLUMNS = ["interaction_type", "n", "n_no_consensus", "mean_s", "q1_s", "median_s", "q3_s",
                   "lower_whisker_s", "upper_whisker_s", "outliers_s"]
INTENT_REPORT_COLUMNS = ["session_id", "agent", "t_on_s", "t_peak_s", "t_off_s", "classified_goal",
                         "confidence", "true_goal"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _sessions(path):
    """Session directories under ``path``: the dataset's sessions or ``path`` itself."""
    p = Path(path)
    if (p / "manifest.ini").exists():
        return [d for _, d, _ in dataset_sessions(p)]
    if (p / "session.ini").exists():
        return [p]
    raise SchemaError(f"{p} holds neither manifest.ini nor session.ini")


def _load_model(path):
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"model file not found: {p}")
    return IntentModel.load(p)


def _say(text):
    print(text, flush=True)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    from .simulator import generate_batch
    settings = load_simulation_config(args.config)
    seed = settings.seed if args.seed is None else args.seed
    workers = settings.workers if args.workers is None else args.workers
    out = Path(args.out)
    results = generate_batch(settings.cells, seed, out, settings.scene, settings.policy,
                             settings.duration, workers)
    cp = dataio.read_ini(out / "manifest.ini")
    cp["dataset"]["cells"] = ", ".join(f"{c.value}:{n}" for c, n in settings.cells)
    dataio.write_ini(cp, out / "manifest.ini")
    _say(f"wrote {len(results)} sessions to {out}")
    return EXIT_OK


def cmd_analyze(args):
    config = load_analysis_config(args.config)
    model = _load_model(args.model)
    for d in _sessions(args.path):
        rep = analyze_session(d, config, model)
        b = rep.boundary
        neg = "none" if b.t_dec is None else f"{b.t_dec - b.t_start:.3f} s"
        _say(f"{d.name}: {len(rep.segments)} actions, negotiation {neg}, settled goal {b.settled_goal}")
    return EXIT_OK


def _negotiation_samples(dataset):
    samples, missing = [], {}
    for d in _sessions(dataset):
        b, rec = dataio.read_boundary(d / "boundary.json")
        cell = rec.get("interaction_type")
        if not cell:
            raise SchemaError(f"{d.name}: boundary.json has no interaction_type")
        if b.t_dec is None:
            missing[cell] = missing.get(cell, 0) + 1
            continue
        samples.append(NegotiationSample(rec.get("session_id", d.name), cell, max(0.0, b.t_dec - b.t_start)))
    return samples, missing


def cmd_stats(args):
    samples, missing = _negotiation_samples(args.dataset)
    if not samples:
        raise InvalidInputError("no session reached consensus; nothing to summarise")
    summary = negotiation_summary(samples)
    if len(summary) < 2:
        raise InvalidInputError("statistics need at least two interaction types")
    groups = {k: [s.duration for s in samples if s.interaction_type == k] for k in summary}
    res = anova(groups)
    hsd = tukey_hsd(groups, alpha=args.alpha)
    out = Path(args.out) if args.out else Path(args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, bs in summary.items():
        rows.append([k, str(bs.n), str(missing.get(k, 0)), dataio.fmt_float(bs.mean), dataio.fmt_float(bs.q1),
                     dataio.fmt_float(bs.median), dataio.fmt_float(bs.q3), dataio.fmt_float(bs.lower_whisker),
                     dataio.fmt_float(bs.upper_whisker), ";".join(dataio.fmt_float(v) for v in bs.outliers)])
    dataio._write_rows(out / "negotiation_summary.csv", SUMMARY_COLUMNS, rows)
    lines = ["negotiation time by interaction type", ""]
    for k, bs in summary.items():
        lines.append(f"{k:<18} n={bs.n:<3d} mean={bs.mean:.3f} s  median={bs.median:.3f} s  "
                     f"no consensus={missing.get(k, 0)}")
    lines += ["", "one-way ANOVA",
              f"F({res.df_between}, {res.df_within}) = {res.F:.4f}  p = {res.p:.4g}", "",
              f"Tukey HSD (alpha = {args.alpha:g})",
              f"{'a':<18} {'b':<18} {'diff_s':>9} {'q':>9} {'p_adj':>9}  significant"]
    for c in hsd.pairs:
        lines.append(f"{c.a:<18} {c.b:<18} {c.mean_diff:9.3f} {c.q:9.3f} {c.p_adj:9.4f}  "
                     f"{'yes' if c.significant else 'no'}")
    (out / "stats_report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _say("\n".join(lines))
    return EXIT_OK


def cmd_plot(args):
    from .plotting import plot_session
    kinds = ("power", "projected", "embedding") if args.kind == "all" else (args.kind,)
    paths = plot_session(args.session, kinds, _load_model(args.model), args.out)
    for k in kinds:
        _say(f"{k}: {paths[k]}")
    return EXIT_OK


def _goal_agents(directory, which):
    if which == "all":
        return (1, 2)
    cp = dataio.read_session_manifest(directory)
    text = cp["session"].get("assignment", "")
    try:
        goals = [AgentGoal.parse(g) for g in text.split(",")]
    except DyadicIntentError:
        raise SchemaError(f"{Path(directory).name}: cannot parse assignment {text!r}") from None
    if len(goals) != 2:
        raise SchemaError(f"{Path(directory).name}: assignment must name two goals")
    keep = (GoalKind.HARD,) if which == "hard" else (GoalKind.HARD, GoalKind.SOFT)
    return tuple(k for k, g in enumerate(goals, 1) if g.kind in keep)


def _session_actions(directory):
    """Detected segments of an analysed session with their feature vectors."""
    d = Path(directory)
    for name in ("segments.csv", "processed.csv"):
        if not (d / name).exists():
            raise SchemaError(f"{d.name}: {name} missing; run 'analyze' first")
    ctx = load_context(d)
    fused = dataio.read_processed(d / "processed.csv")
    segments = dataio.read_segments(d / "segments.csv")
    for s in segments:
        s.features = extract_features(s, fused, ctx.layout)
    return ctx, segments


def _truth_labels(directory, segments, kinds):
    path = Path(directory) / "truth.csv"
    if not path.exists():
        return {}
    epochs = [e for e in dataio.read_truth(path) if e.kind in kinds]
    return {i: epochs[j].goal for i, j, _ in match_epochs(segments, epochs, 0.5)}


def cmd_intent_fit(args):
    kinds = tuple(k.strip() for k in args.kinds.split(","))
    X, y = [], []
    for d in _sessions(args.dataset):
        _, segments = _session_actions(d)
        labels = _truth_labels(d, segments, kinds)
        agents = _goal_agents(d, args.agents)
        for i, goal in sorted(labels.items()):
            if segments[i].agent in agents:
                X.append(segments[i].features)
                y.append(goal)
    if not X:
        raise InvalidInputError("no labelled actions found")
    model = fit_lda(np.array(X), np.array(y))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    counts = ", ".join(f"goal {c}: {int(np.sum(np.array(y) == c))}" for c in model.classes)
    _say(f"fitted on {len(y)} actions ({counts}); model written to {out}")
    return EXIT_OK


def cmd_intent_report(args):
    model = _load_model(args.model)
    rows, n_lab, n_hit = [], 0, 0
    for d in _sessions(args.path):
        ctx, segments = _session_actions(d)
        labels = _truth_labels(d, segments, ("push", "drive"))
        for i, s in enumerate(segments):
            goal, conf = classify(model, s.features)
            truth = labels.get(i)
            if truth is not None:
                n_lab += 1
                n_hit += int(truth == goal)
            rows.append([ctx.session_id, str(s.agent), dataio.fmt_time(s.t_on), dataio.fmt_time(s.t_peak),
                         dataio.fmt_time(s.t_off), str(goal), dataio.fmt_float(conf),
                         "" if truth is None else str(truth)])
    p = Path(args.path)
    out = Path(args.out) if args.out else (p / "intent_report.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio._write_rows(out, INTENT_REPORT_COLUMNS, rows)
    msg = f"{len(rows)} actions classified"
    if n_lab:
        msg += f"; accuracy {n_hit / n_lab:.3f} on {n_lab} labelled"
    _say(f"{msg}; written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="dyadic-intent", description="Haptic intent inference for two-agent object carrying.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--config", help="INI file with [batch] [scene] [noise] [object] [layout] [policy]")
    s.add_argument("--out", required=True, help="output dataset directory")
    s.add_argument("--seed", type=int, help="batch seed (overrides [batch] seed)")
    s.add_argument("--workers", type=int, help="worker processes")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="fuse, segment and detect the negotiation boundary")
    a.add_argument("path", help="session directory or dataset directory")
    a.add_argument("--config", help="INI file with [filter] [segmenter] [features]")
    a.add_argument("--model", help="intent model file used to classify actions")
    a.set_defaults(func=cmd_analyze)

    st = sub.add_parser("stats", help="negotiation-time statistics over an analysed dataset")
    st.add_argument("dataset")
    st.add_argument("--out", help="output directory (default: the dataset)")
    st.add_argument("--alpha", type=float, default=0.05)
    st.set_defaults(func=cmd_stats)

    pl = sub.add_parser("plot", help="SVG figures of an analysed session")
    pl.add_argument("session")
    pl.add_argument("--kind", choices=("power", "projected", "embedding", "all"), default="all")
    pl.add_argument("--model")
    pl.add_argument("--out", help="output directory (default: the session)")
    pl.set_defaults(func=cmd_plot)

    it = sub.add_parser("intent", help="fit or apply the intent classifier")
    isub = it.add_subparsers(dest="intent_command", required=True, parser_class=_Parser)
    f = isub.add_parser("fit", help="fit a model on labelled actions of an analysed dataset")
    f.add_argument("dataset")
    f.add_argument("--out", required=True, help="model file to write")
    f.add_argument("--agents", choices=("hard", "goal", "all"), default="hard",
                   help="whose actions to train on (default: agents holding a hard goal)")
    f.add_argument("--kinds", default="push,drive", help="truth epoch kinds used as labels")
    f.set_defaults(func=cmd_intent_fit)
    r = isub.add_parser("report", help="classify every detected action")
    r.add_argument("path", help="session directory or dataset directory")
    r.add_argument("--model", required=True)
    r.add_argument("--out", help="CSV to write (default: PATH/intent_report.csv)")
    r.set_defaults(func=cmd_intent_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_USAGE
    except (DyadicIntentError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
