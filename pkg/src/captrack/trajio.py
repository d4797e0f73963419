"""Trajectory, state and report file formats.

Floats are serialized with 17 significant digits so every value round-trips
bit-exactly and repeated runs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fitting import Correspondences
from .geometry import Pose9, Rot3
from .simulator import Observation
from .tracking import PartEstimate


def _encode(obj) -> str:
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_canonical(obj) -> str:
    """Deterministic JSON with fixed float formatting and key order."""
    return _encode(obj)


# --- Trajectory files (JSON lines, one record per frame) ---------------------


def observation_record(obs: Observation) -> dict:
    if obs.labels is None or obs.coords is None or obs.poses is None:
        raise ValueError("trajectory records need full ground truth")
    return {
        "frame": obs.frame,
        "points": obs.points,
        "gt": [{"d": p.d, "R": p.r.m, "T": p.t} for p in obs.poses],
        "labels": obs.labels,
        "nocs": obs.coords,
    }


def write_trajectory(path, observations) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for obs in observations:
            fh.write(dumps_canonical(observation_record(obs)))
            fh.write("\n")


def parse_observation(record: dict) -> Observation:
    poses = tuple(
        Pose9(np.asarray(g["d"], float), Rot3(np.asarray(g["R"], float)), np.asarray(g["T"], float))
        for g in record["gt"]
    )
    return Observation(
        frame=int(record["frame"]),
        points=np.asarray(record["points"], dtype=float),
        labels=np.asarray(record["labels"], dtype=int),
        coords=np.asarray(record["nocs"], dtype=float),
        poses=poses,
    )


def read_trajectory(path) -> list[Observation]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(parse_observation(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad trajectory record: {exc}") from exc
    if not out:
        raise ValueError(f"{path}: empty trajectory file")
    return out


# --- Predicted-state files ---------------------------------------------------


def state_record(frame: int, parts) -> dict:
    return {
        "frame": frame,
        "parts": [
            {"d": p.sim.s * p.aspect, "R": p.sim.r.m, "T": p.sim.t, "lost": p.lost}
            for p in parts
        ],
    }


def write_states(path, records) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dumps_canonical(rec))
            fh.write("\n")


def read_states(path) -> list[list[PartEstimate]]:
    """Per-frame part estimates from a predicted-state file."""
    from .geometry import Sim3

    path = Path(path)
    frames = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                parts = []
                for p in rec["parts"]:
                    d = np.asarray(p["d"], dtype=float)
                    scale = float(np.linalg.norm(d))
                    parts.append(
                        PartEstimate(
                            sim=Sim3(scale, Rot3(np.asarray(p["R"], float)), np.asarray(p["T"], float)),
                            aspect=d / scale,
                            lost=bool(p["lost"]),
                        )
                    )
                frames.append(parts)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad state record: {exc}") from exc
    if not frames:
        raise ValueError(f"{path}: empty state file")
    return frames


# --- Correspondence files ----------------------------------------------------


def write_correspondences(path, corr: Correspondences) -> None:
    records = [
        {"camera": c, "normalized": y}
        for c, y in zip(corr.camera, corr.normalized)
    ]
    Path(path).write_text(dumps_canonical(records) + "\n", encoding="utf-8")


def read_correspondences(path) -> Correspondences:
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
        camera = np.array([r["camera"] for r in records], dtype=float)
        normalized = np.array([r["normalized"] for r in records], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: bad correspondence file: {exc}") from exc
    return Correspondences(camera, normalized)


# --- Manifests and reports ---------------------------------------------------


def write_json(path, payload: dict) -> None:
    Path(path).write_text(dumps_canonical(payload) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


CSV_COLUMNS = ("setting", "5deg5cm", "mIoU", "R_err", "T_err", "theta_err", "d_err", "lost")


def report_csv_row(setting: str, report) -> dict:
    def fmt(v):
        return "" if v is None else format(float(v), ".6f")

    return {
        "setting": setting,
        "5deg5cm": fmt(report.acc_5deg5cm * 100.0),
        "mIoU": fmt(report.mean_iou * 100.0),
        "R_err": fmt(report.r_err_deg),
        "T_err": fmt(report.t_err_cm),
        "theta_err": fmt(report.theta_err_deg),
        "d_err": fmt(report.d_err_cm),
        "lost": str(report.lost_frames),
    }


def write_csv(path, rows) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
