"""INI configuration files mapped onto the config dataclasses.

Each section overrides the fields of one config type; unknown sections or
keys and unparsable values raise :class:`ConfigError` naming the key.

Simulation sections: ``[batch] [scene] [noise] [object] [layout] [policy]``.
Analysis sections: ``[filter] [segmenter] [features]``.
"""
from __future__ import annotations

import configparser
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DyadicIntentError
from .features import PhysicalObject
from .fusion import FilterConfig
from .intent import SUPPORTED_CELLS, InteractionType
from .kinematics import GoalLayout
from .pipeline import AnalysisConfig, FeatureConfig
from .segmentation import SegmenterConfig
from .simulator import AgentPolicy, NoiseConfig, SceneConfig

SIMULATION_SECTIONS = ("batch", "scene", "noise", "object", "layout", "policy")
ANALYSIS_SECTIONS = ("filter", "segmenter", "features")

_SCENE_EXCLUDE = {"obj", "layout", "noise"}
_POLICY_EXCLUDE = {"goal", "commitment", "script"}


def _coerce(section, key, text, annotation, current):
    text = text.strip()
    ann = str(annotation)
    try:
        if "Optional" in ann or current is None:
            if text.lower() in ("", "none"):
                return None
            return float(text)
        if ann == "bool" or isinstance(current, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if ann == "int" or (isinstance(current, int) and not isinstance(current, bool)):
            return int(text)
        if ann == "float" or isinstance(current, float):
            return float(text)
        if ann == "tuple" or isinstance(current, tuple):
            return tuple(float(x) for x in text.replace(",", " ").split())
        return text
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def apply_section(obj, section, items, exclude=()):
    """Return ``obj`` with the fields named in ``items`` replaced."""
    known = {f.name: f for f in fields(obj) if f.name not in exclude}
    changes = {}
    for key, text in items.items():
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        changes[key] = _coerce(section, key, text, known[key].type, getattr(obj, key))
    if not changes:
        return obj
    try:
        return replace(obj, **changes)
    except (DyadicIntentError, ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {', '.join(sorted(changes))}: {exc}") from None


def read_config(path, allowed):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path.name}: {exc}") from None
    for name in cp.sections():
        if name not in SIMULATION_SECTIONS + ANALYSIS_SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
    return {name: dict(cp[name]) for name in cp.sections() if name in allowed}


def parse_cells(text):
    """``"KCG:5, ConflictingSS:10"`` -> ``[(InteractionType.KCG, 5), ...]``."""
    out = []
    for item in text.replace("\n", ",").split(","):
        item = item.strip()
        if not item:
            continue
        name, _, count = item.partition(":")
        try:
            cell = InteractionType.parse(name.strip())
        except DyadicIntentError:
            raise ConfigError(f"[batch] cells: unknown interaction type {name.strip()!r}") from None
        try:
            n = int(count) if count.strip() else 1
        except ValueError:
            raise ConfigError(f"[batch] cells: bad count {count!r} for {cell.value}") from None
        if n < 1:
            raise ConfigError(f"[batch] cells: count for {cell.value} must be at least 1")
        out.append((cell, n))
    if not out:
        raise ConfigError("[batch] cells: no cells given")
    return out


class SimulationSettings:
    def __init__(self, scene, policy, cells, seed, duration, workers):
        self.scene = scene
        self.policy = policy
        self.cells = cells
        self.seed = seed
        self.duration = duration
        self.workers = workers


def simulation_settings(sections=None):
    sections = sections or {}
    batch = dict(sections.get("batch", {}))
    cells = parse_cells(batch.pop("cells")) if "cells" in batch else [(c, 10) for c in SUPPORTED_CELLS]
    try:
        seed = int(batch.pop("seed", "0"))
    except ValueError:
        raise ConfigError("[batch] seed: not an integer") from None
    try:
        duration = float(batch.pop("duration", "16.0"))
    except ValueError:
        raise ConfigError("[batch] duration: not a number") from None
    try:
        workers = int(batch.pop("workers", "1"))
    except ValueError:
        raise ConfigError("[batch] workers: not an integer") from None
    if batch:
        raise ConfigError(f"[batch] unknown key {sorted(batch)[0]!r}")

    obj = PhysicalObject()
    if "object" in sections:
        items = dict(sections["object"])
        handles = None
        for k in ("q1", "q2"):
            if k in items:
                try:
                    v = np.array([float(x) for x in items.pop(k).replace(",", " ").split()])
                    handles = replace(handles or obj.handles, **{k: v})
                except (ValueError, DyadicIntentError) as exc:
                    raise ConfigError(f"[object] {k}: {exc}") from None
        if handles is not None:
            obj = replace(obj, handles=handles)
        obj = apply_section(obj, "object", items, exclude={"handles"})
    layout = GoalLayout.circular()
    if "layout" in sections:
        items = dict(sections["layout"])
        args = {"radius": 2.4, "spacing_deg": 40.0, "n": 3, "heading_deg": 0.0}
        center = (0.0, 0.0)
        for k, v in items.items():
            try:
                if k == "center":
                    center = tuple(float(x) for x in v.replace(",", " ").split())
                elif k == "n":
                    args[k] = int(v)
                elif k in args:
                    args[k] = float(v)
                else:
                    raise ConfigError(f"[layout] unknown key {k!r}")
            except ValueError:
                raise ConfigError(f"[layout] {k}: cannot parse {v!r}") from None
        try:
            layout = GoalLayout.circular(center=center, **args)
        except DyadicIntentError as exc:
            raise ConfigError(f"[layout] {exc}") from None
    noise = apply_section(NoiseConfig(), "noise", sections.get("noise", {}))
    scene = SceneConfig(obj=obj, layout=layout, noise=noise)
    scene = apply_section(scene, "scene", sections.get("scene", {}), exclude=_SCENE_EXCLUDE)
    policy = apply_section(AgentPolicy(), "policy", sections.get("policy", {}), exclude=_POLICY_EXCLUDE)
    return SimulationSettings(scene, policy, cells, seed, duration, workers)


def analysis_settings(sections=None):
    sections = sections or {}
    return AnalysisConfig(
        filter=apply_section(FilterConfig(), "filter", sections.get("filter", {})),
        segmenter=apply_section(SegmenterConfig(), "segmenter", sections.get("segmenter", {})),
        features=apply_section(FeatureConfig(), "features", sections.get("features", {})),
    )


def load_simulation_config(path=None):
    return simulation_settings(read_config(path, SIMULATION_SECTIONS) if path else None)


def load_analysis_config(path=None):
    return analysis_settings(read_config(path, ANALYSIS_SECTIONS) if path else None)
