"""On-disk formats: raw and derived CSV tables, session and dataset manifests.

Every table has a mandatory header row, comma separators and ``.`` decimals.
Floats are written with the shortest representation that parses back to the
same double, so ``read(write(x)) == x`` holds bit for bit.  Time columns
always carry at least six fractional digits.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .exceptions import MissingStreamError, SchemaError
from .fusion import FusedStream, PoseObservations, RawStreams, Stream
from .features import PowerFeatures
from .kinematics import quat_from_yaw, quat_to_yaw
from .segmentation import ActionSegment, PhaseBoundary

SCHEMA_VERSION = 1

FT_COLUMNS = ["t_s", "agent", "fx_N", "fy_N", "fz_N", "tx_Nm", "ty_Nm", "tz_Nm"]
IMU_COLUMNS = ["t_s", "ax_mps2", "ay_mps2", "az_mps2", "wx_rps", "wy_rps", "wz_rps"]
POSE_COLUMNS = ["t_s", "camera_id", "px_m", "py_m", "pz_m", "qw", "qx", "qy", "qz"]
PROCESSED_COLUMNS = ["t_s", "px_m", "py_m", "yaw_rad", "vx_mps", "vy_mps", "wz_rps",
                     "f1x_N", "f1y_N", "f2x_N", "f2y_N", "v1x_mps", "v1y_mps", "v2x_mps", "v2y_mps"]
SEGMENT_COLUMNS = ["agent", "t_on_s", "t_peak_s", "t_off_s", "peak_power_W", "classified_goal", "confidence"]
TRUTH_COLUMNS = ["agent", "t_on_s", "t_off_s", "goal", "kind"]

RAW_FILES = {"ft": "raw_ft.csv", "imu": "raw_imu.csv", "pose": "raw_pose.csv"}


def feature_columns(n_goals):
    cols = ["t_s", "p1_W", "p2_W", "psum_W"]
    for k in (1, 2):
        for i in range(1, n_goals + 1):
            cols += [f"fproj_{k}_{i}_N", f"vproj_{k}_{i}_mps", f"pproj_{k}_{i}_W", f"quad_{k}_{i}"]
    return cols


# --------------------------------------------------------------------------
# number formatting
# --------------------------------------------------------------------------

def fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        raise SchemaError(f"cannot write non-finite value {x!r}")
    return repr(x)


def fmt_time(t):
    s = np.format_float_positional(float(t), unique=True, trim="0")
    whole, _, frac = s.partition(".")
    return f"{whole}.{frac.ljust(6, '0')}"


def fmt_opt(x, kind=float):
    if x is None:
        return ""
    return str(int(x)) if kind is int else fmt_float(x)


def _parse_opt(text, kind=float):
    text = text.strip()
    return None if text == "" else kind(text)


# --------------------------------------------------------------------------
# generic table I/O
# --------------------------------------------------------------------------

def _write_rows(path, header, rows):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        fh.writelines(",".join(r) + "\n" for r in rows)
    os.replace(tmp, path)


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise MissingStreamError(f"missing file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: empty file") from None
        if got != list(header):
            raise SchemaError(f"{path.name}: header {got} does not match expected {list(header)}")
        rows = [r for r in reader if r]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(f"{path.name}: row {i + 2} has {len(r)} fields, expected {len(header)}")
    return rows


def _float_block(path, rows, cols):
    try:
        return np.array([[float(r[c]) for c in cols] for r in rows], dtype=float).reshape(len(rows), len(cols))
    except ValueError as exc:
        raise SchemaError(f"{Path(path).name}: {exc}") from None


# --------------------------------------------------------------------------
# raw streams
# --------------------------------------------------------------------------

def write_raw(raw, directory):
    d = Path(directory)
    rows = []
    for agent, s in ((1, raw.ft1), (2, raw.ft2)):
        for t, v in zip(s.t, s.values):
            rows.append((t, agent, v))
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_rows(d / RAW_FILES["ft"], FT_COLUMNS,
                ([fmt_time(t), str(a)] + [fmt_float(x) for x in v[:6]] for t, a, v in rows))
    _write_rows(d / RAW_FILES["imu"], IMU_COLUMNS,
                ([fmt_time(t)] + [fmt_float(x) for x in v[:6]] for t, v in zip(raw.imu.t, raw.imu.values)))
    p = raw.pose
    _write_rows(d / RAW_FILES["pose"], POSE_COLUMNS,
                ([fmt_time(t), str(int(c))] + [fmt_float(x) for x in pos] + [fmt_float(x) for x in q]
                 for t, c, pos, q in zip(p.t, p.camera_id, p.position, p.orientation)))


def read_raw(directory):
    d = Path(directory)
    path = d / RAW_FILES["ft"]
    rows = _read_rows(path, FT_COLUMNS)
    try:
        agents = np.array([int(r[1]) for r in rows], dtype=int)
    except ValueError as exc:
        raise SchemaError(f"{path.name}: {exc}") from None
    if not set(agents.tolist()) <= {1, 2}:
        raise SchemaError(f"{path.name}: agent must be 1 or 2")
    block = _float_block(path, rows, [0, 2, 3, 4, 5, 6, 7])
    ft = []
    for a in (1, 2):
        m = agents == a
        if not np.any(m):
            raise MissingStreamError(f"{path.name}: no samples for agent {a}")
        ft.append(_stream(path, block[m, 0], block[m, 1:]))
    path = d / RAW_FILES["imu"]
    rows = _read_rows(path, IMU_COLUMNS)
    block = _float_block(path, rows, range(7))
    imu = _stream(path, block[:, 0], block[:, 1:])
    path = d / RAW_FILES["pose"]
    rows = _read_rows(path, POSE_COLUMNS)
    block = _float_block(path, rows, [0, 2, 3, 4, 5, 6, 7, 8])
    try:
        cams = np.array([int(r[1]) for r in rows], dtype=int)
        pose = PoseObservations(block[:, 0], cams, block[:, 1:4], block[:, 4:8])
    except ValueError as exc:
        raise SchemaError(f"{path.name}: {exc}") from None
    return RawStreams(ft[0], ft[1], imu, pose)


def _stream(path, t, values):
    try:
        return Stream(t, values)
    except ValueError as exc:
        raise SchemaError(f"{Path(path).name}: {exc}") from None


# --------------------------------------------------------------------------
# derived tables
# --------------------------------------------------------------------------

def write_processed(fused, path):
    yaw = yaw_of(fused)
    cols = np.column_stack([
        fused.position[:, :2], yaw, fused.linear_velocity[:, :2], fused.angular_velocity[:, 2],
        fused.f1[:, :2], fused.f2[:, :2], fused.v1[:, :2], fused.v2[:, :2],
    ])
    _write_rows(path, PROCESSED_COLUMNS,
                ([fmt_time(t)] + [fmt_float(x) for x in row] for t, row in zip(fused.t, cols)))


def read_processed(path, handles=None):
    """Planar view of a processed table as a :class:`FusedStream`.

    Vertical components are zero; handle velocities are taken from the file.
    """
    rows = _read_rows(path, PROCESSED_COLUMNS)
    b = _float_block(path, rows, range(len(PROCESSED_COLUMNS)))
    n = len(b)
    z = np.zeros((n, 1))
    position = np.hstack([b[:, 1:3], z])
    quat = quat_from_yaw(b[:, 3]) if n else np.zeros((0, 4))
    vel = np.hstack([b[:, 4:6], z])
    omega = np.hstack([z, z, b[:, 6:7]])
    return FusedStream(b[:, 0], position, quat, vel, omega,
                       np.hstack([b[:, 7:9], z]), np.hstack([b[:, 9:11], z]),
                       np.hstack([b[:, 11:13], z]), np.hstack([b[:, 13:15], z]),
                       extras={"yaw": b[:, 3]})


def write_features(pf, path):
    T, _, N = pf.f_proj.shape
    header = feature_columns(N)

    def rows():
        for j in range(T):
            r = [fmt_time(pf.t[j]), fmt_float(pf.p1[j]), fmt_float(pf.p2[j]), fmt_float(pf.p_sum[j])]
            for k in range(2):
                for i in range(N):
                    r += [fmt_float(pf.f_proj[j, k, i]), fmt_float(pf.v_proj[j, k, i]),
                          fmt_float(pf.p_proj[j, k, i]), str(int(pf.quadrant[j, k, i]))]
            yield r
    _write_rows(path, header, rows())


def read_features(path):
    path = Path(path)
    if not path.exists():
        raise MissingStreamError(f"missing file: {path}")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip().split(",")
    n_goals = (len(first) - 4) // 8
    if n_goals < 1 or len(first) != 4 + 8 * n_goals:
        raise SchemaError(f"{path.name}: cannot infer goal count from header")
    rows = _read_rows(path, feature_columns(n_goals))
    b = _float_block(path, rows, range(len(first)))
    T = len(b)
    per = b[:, 4:].reshape(T, 2, n_goals, 4)
    return PowerFeatures(b[:, 0], b[:, 1], b[:, 2], b[:, 3], per[..., 0].copy(), per[..., 1].copy(),
                         per[..., 2].copy(), per[..., 3].astype(int))


def write_segments(segments, path):
    _write_rows(path, SEGMENT_COLUMNS, (
        [str(s.agent), fmt_time(s.t_on), fmt_time(s.t_peak), fmt_time(s.t_off), fmt_float(s.peak_power),
         fmt_opt(s.classified_goal, int), fmt_opt(s.confidence)] for s in segments))


def read_segments(path):
    out = []
    for i, r in enumerate(_read_rows(path, SEGMENT_COLUMNS)):
        try:
            out.append(ActionSegment(agent=int(r[0]), t_on=float(r[1]), t_peak=float(r[2]), t_off=float(r[3]),
                                     peak_power=float(r[4]), classified_goal=_parse_opt(r[5], int),
                                     confidence=_parse_opt(r[6])))
        except ValueError as exc:
            raise SchemaError(f"{Path(path).name}: row {i + 2}: {exc}") from None
    return out


def write_truth(epochs, path):
    _write_rows(path, TRUTH_COLUMNS, (
        [str(e.agent), fmt_time(e.t_on), fmt_time(e.t_off), str(e.goal), e.kind] for e in epochs))


def read_truth(path):
    from .simulator import Epoch
    out = []
    for i, r in enumerate(_read_rows(path, TRUTH_COLUMNS)):
        try:
            out.append(Epoch(int(r[0]), float(r[1]), float(r[2]), int(r[3]), r[4]))
        except ValueError as exc:
            raise SchemaError(f"{Path(path).name}: row {i + 2}: {exc}") from None
    return out


def write_boundary(boundary, path, extra=None):
    rec = boundary.to_record()
    rec.update(extra or {})
    text = json.dumps(rec, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_boundary(path):
    path = Path(path)
    if not path.exists():
        raise MissingStreamError(f"missing file: {path}")
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
        b = PhaseBoundary(t_start=float(rec["t_start"]), t_dec=rec["t_dec"], settled_goal=int(rec["settled_goal"]),
                          distance=rec.get("distance"), t_arrival=rec.get("t_arrival"))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path.name}: {exc}") from None
    return b, rec


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

def new_config():
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def write_ini(cp, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        cp.write(fh)
    os.replace(tmp, path)


def read_ini(path):
    path = Path(path)
    if not path.exists():
        raise MissingStreamError(f"missing file: {path}")
    cp = new_config()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise SchemaError(f"{path.name}: {exc}") from None
    return cp


def read_session_manifest(directory):
    """Parse ``session.ini`` and check that referenced files exist."""
    d = Path(directory)
    cp = read_ini(d / "session.ini")
    if not cp.has_section("session"):
        raise SchemaError("session.ini: missing [session] section")
    sec = cp["session"]
    version = sec.get("schema_version")
    if version is None or version.strip() != str(SCHEMA_VERSION):
        raise SchemaError(f"session.ini: unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    if "t_start" not in sec:
        raise SchemaError("session.ini: missing key t_start")
    if cp.has_section("files"):
        for key, name in cp["files"].items():
            if not (d / name).exists():
                raise MissingStreamError(f"missing file: {d / name} (files.{key})")
    return cp


def yaw_of(fused):
    if "yaw" in fused.extras:
        return fused.extras["yaw"]
    return quat_to_yaw(fused.orientation)


__all__ = [
    "SCHEMA_VERSION", "FT_COLUMNS", "IMU_COLUMNS", "POSE_COLUMNS", "PROCESSED_COLUMNS", "SEGMENT_COLUMNS",
    "TRUTH_COLUMNS", "RAW_FILES", "feature_columns", "fmt_float", "fmt_time", "write_raw", "read_raw",
    "write_processed", "read_processed", "write_features", "read_features", "write_segments", "read_segments",
    "write_truth", "read_truth", "write_boundary", "read_boundary", "read_session_manifest", "read_ini",
    "write_ini", "new_config",
]
