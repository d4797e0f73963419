"""Experiment orchestration behind the CLI subcommands.

Every run is a pure function of (config, seed): models, motion, oracle
noise and initialization all derive their generators from the master seed
and the trajectory index, so file outputs are byte-identical across
repeats and independent of the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import trajio
from .config import ExperimentConfig, config_to_dict
from .errors import NoConsensusError
from .fitting import (
    RansacParams,
    fit_scale_translation,
    fit_symmetric,
    ransac_fit,
    umeyama_sim3,
)
from .geometry import Rot3, Sim3
from .metrics import MetricsReport, evaluate_run, merge_reports
from .oracles import OraclePredictor
from .rng import STREAM_INIT_EXTRA, STREAM_INJECT, fold_seed
from .simulator import (
    MotionSpec,
    ObjectModel,
    forward_kinematics,
    make_primitive_model,
    render_observation,
    sample_trajectory,
)
from .tracking import TrackerState, TrackOptions, apply_injection, init_tracker, track_step

log = logging.getLogger("captrack")

VIEWPOINT = np.zeros(3)

ROBUSTNESS_SETTINGS = (
    ("orig", 0, 0),
    ("init_x1", 1, 0),
    ("init_x2", 2, 0),
    ("all_x1", 0, 1),
    ("all_x2", 0, 2),
)


def trajectory_model(cfg: ExperimentConfig, index: int) -> ObjectModel:
    return make_primitive_model(cfg.category, (cfg.seed, index), cfg.points_per_part)


def generate_trajectory(cfg: ExperimentConfig, index: int):
    """All observations of one trajectory (in memory)."""
    model = trajectory_model(cfg, index)
    frames = sample_trajectory(model, cfg.frames, cfg.motion, (cfg.seed, index))
    observations = []
    for t, (root_pose, joint_states) in enumerate(frames):
        poses = forward_kinematics(model, root_pose, joint_states)
        observations.append(
            render_observation(model, poses, VIEWPOINT, cfg.points_per_frame, frame=t)
        )
    return model, observations


def _traj_name(index: int) -> str:
    return f"traj_{index:04d}.jsonl"


def _generate_worker(args):
    cfg, index, out_dir = args
    model, observations = generate_trajectory(cfg, index)
    path = Path(out_dir) / _traj_name(index)
    trajio.write_trajectory(path, observations)
    joints = [
        {
            "kind": j.kind,
            "axis": j.axis,
            "pivot": j.pivot,
            "parent": j.parent,
            "child": j.child,
            "limits": list(j.limits),
            "rest_scale": j.rest_scale,
            "rest_translation": j.rest_translation,
        }
        for j in model.joints
    ]
    return index, str(path), joints


def _pool_map(worker, payloads, workers: int):
    if workers <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, payloads))


def cmd_generate(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> list[Path]:
    """Write trajectory files plus the sidecar manifest; deterministic per seed."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = _pool_map(
        _generate_worker, [(cfg, i, str(out)) for i in range(cfg.trajectories)], workers
    )
    results.sort(key=lambda r: r[0])
    perturb = cfg.perturb
    manifest = {
        "category": cfg.category,
        "seed": cfg.seed,
        "M": len(trajectory_model(cfg, 0).parts),
        "frames": cfg.frames,
        "trajectories": cfg.trajectories,
        "sigmas": {
            "sigma_scale": perturb.sigma_scale,
            "sigma_rot": perturb.sigma_rot,
            "sigma_trans": perturb.sigma_trans,
        },
        "files": [Path(p).name for _, p, _ in results],
        "joints": {str(i): joints for i, _, joints in results},
        "config": config_to_dict(cfg),
    }
    trajio.write_json(out / "manifest.json", manifest)
    log.info("generated %d trajectories in %s", cfg.trajectories, out)
    return [Path(p) for _, p, _ in results]


def track_options(cfg: ExperimentConfig, model: ObjectModel) -> TrackOptions:
    tr = cfg.tracker
    return TrackOptions(
        aspect_policy=tr.aspect_policy,
        aspect_blend=tr.aspect_blend,
        use_ransac=tr.use_ransac,
        ransac=tr.ransac,
        symmetric_axis=model.symmetric_axis,
        crop_margin=tr.crop_margin,
        rotation_projection=tr.rotation_projection,
        joints=model.joints,
    )


def track_trajectory(
    cfg: ExperimentConfig,
    observations,
    index: int,
    init_extra: int = 0,
    inject: int = 0,
) -> list[list]:
    """Per-frame part estimates for one trajectory (frame 0 is the init)."""
    model = trajectory_model(cfg, index)
    options = track_options(cfg, model)
    noise = replace(cfg.noise, seed=fold_seed(cfg.noise.seed, index))
    predictor = OraclePredictor(noise, symmetric_axis=model.symmetric_axis)

    state = init_tracker(list(observations[0].poses), cfg.perturb, (cfg.seed, index))
    if init_extra:
        state = apply_injection(
            state, cfg.perturb, init_extra, (cfg.seed, index, STREAM_INIT_EXTRA)
        )
    estimates = [list(state.parts)]
    for obs in observations[1:]:
        stepped = state
        if inject:
            stepped = apply_injection(
                state, cfg.perturb, inject, (cfg.seed, index, STREAM_INJECT, obs.frame)
            )
        state = track_step(stepped, obs, predictor, options)
        estimates.append(list(state.parts))
    return estimates


def _track_worker(args):
    cfg, traj_path, index, out_dir, init_extra, inject = args
    observations = trajio.read_trajectory(traj_path)
    estimates = track_trajectory(cfg, observations, index, init_extra, inject)
    records = [
        trajio.state_record(obs.frame, parts)
        for obs, parts in zip(observations, estimates)
    ]
    path = Path(out_dir) / (Path(traj_path).stem + ".track.jsonl")
    trajio.write_states(path, records)
    return index, str(path)


def trajectory_index(path) -> int:
    stem = Path(path).stem.replace(".track", "")
    try:
        return int(stem.split("_")[-1])
    except ValueError as exc:
        raise ValueError(f"cannot infer trajectory index from {path}") from exc


def cmd_track(
    cfg: ExperimentConfig,
    traj_paths,
    out_dir=None,
    workers: int = 1,
    init_extra: int = 0,
    inject: int = 0,
) -> list[Path]:
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [
        (cfg, str(p), trajectory_index(p), str(out), init_extra, inject) for p in traj_paths
    ]
    results = _pool_map(_track_worker, payloads, workers)
    results.sort(key=lambda r: r[0])
    return [Path(p) for _, p in results]


def evaluate_trajectory(
    cfg: ExperimentConfig, predicted, observations, index: int, start_frame: int = 0
) -> MetricsReport:
    model = trajectory_model(cfg, index)
    gt = [list(obs.poses) for obs in observations]
    return evaluate_run(
        predicted,
        gt,
        symmetric_axis=model.symmetric_axis,
        joints=model.joints,
        use_gt_extents=False,
        start_frame=start_frame,
    )


def _eval_worker(args):
    cfg, pred_path, gt_path, index = args
    predicted = trajio.read_states(pred_path)
    observations = trajio.read_trajectory(gt_path)
    report = evaluate_trajectory(cfg, predicted, observations, index)
    return index, report


def cmd_eval(
    cfg: ExperimentConfig, pred_paths, gt_paths, out_dir=None, workers: int = 1
) -> tuple[list[MetricsReport], MetricsReport]:
    pred_paths = sorted(pred_paths)
    gt_paths = sorted(gt_paths)
    if len(pred_paths) != len(gt_paths):
        raise ValueError(
            f"misaligned inputs: {len(pred_paths)} prediction files vs "
            f"{len(gt_paths)} trajectory files: {pred_paths} vs {gt_paths}"
        )
    for p, g in zip(pred_paths, gt_paths):
        if trajectory_index(p) != trajectory_index(g):
            raise ValueError(f"misaligned pair: {p} vs {g}")
    payloads = [
        (cfg, str(p), str(g), trajectory_index(g)) for p, g in zip(pred_paths, gt_paths)
    ]
    results = _pool_map(_eval_worker, payloads, workers)
    results.sort(key=lambda r: r[0])
    reports = [r for _, r in results]
    aggregate = merge_reports(reports)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "aggregate": aggregate.to_dict(),
            "trajectories": {
                str(i): rep.to_dict() for (i, _), rep in zip(enumerate(reports), reports)
            },
        }
        trajio.write_json(out / "report.json", payload)
        rows = [trajio.report_csv_row(f"traj_{i:04d}", rep) for i, rep in enumerate(reports)]
        rows.append(trajio.report_csv_row("all", aggregate))
        trajio.write_csv(out / "report.csv", rows)
    return reports, aggregate


def _robustness_worker(args):
    cfg, traj_path, index, init_extra, inject = args
    observations = trajio.read_trajectory(traj_path)
    estimates = track_trajectory(cfg, observations, index, init_extra, inject)
    return index, evaluate_trajectory(cfg, estimates, observations, index)


def cmd_robustness(
    cfg: ExperimentConfig, out_dir=None, workers: int = 1
) -> dict[str, MetricsReport]:
    """Run the five-setting noise sweep and emit the Table-shaped CSV."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    traj_dir = out / "trajectories"
    traj_paths = cmd_generate(cfg, traj_dir, workers)
    results: dict[str, MetricsReport] = {}
    for setting, init_extra, inject in ROBUSTNESS_SETTINGS:
        payloads = [
            (cfg, str(p), trajectory_index(p), init_extra, inject) for p in traj_paths
        ]
        per_traj = _pool_map(_robustness_worker, payloads, workers)
        per_traj.sort(key=lambda r: r[0])
        results[setting] = merge_reports([rep for _, rep in per_traj])
        log.info("robustness %-8s acc=%.4f", setting, results[setting].acc_5deg5cm)
    rows = [trajio.report_csv_row(name, results[name]) for name, _, _ in ROBUSTNESS_SETTINGS]
    trajio.write_csv(out / "robustness.csv", rows)
    trajio.write_json(
        out / "robustness.json", {name: rep.to_dict() for name, rep in results.items()}
    )
    return results


def cmd_fit(
    corr_path,
    estimator: str = "umeyama",
    rotation: Rot3 | None = None,
    symmetric_axis=None,
    ransac: RansacParams | None = None,
) -> dict:
    """Run one estimator on a correspondence file and report residuals."""
    corr = trajio.read_correspondences(corr_path)
    inlier_count = None
    theta = None
    if estimator == "umeyama":
        sim = umeyama_sim3(corr)
    elif estimator == "given-rot":
        rot = rotation if rotation is not None else Rot3.identity()
        s, t = fit_scale_translation(corr, rot)
        sim = Sim3(s, rot, t)
    elif estimator == "symmetric":
        rot = rotation if rotation is not None else Rot3.identity()
        axis = np.array([0.0, 1.0, 0.0]) if symmetric_axis is None else np.asarray(symmetric_axis)
        s, t, theta = fit_symmetric(corr, rot, axis)
        sim = Sim3(s, rot.compose(Rot3.from_axis_angle(axis, theta)), t)
    elif estimator == "ransac":
        params = ransac if ransac is not None else RansacParams()
        try:
            sim, inliers = ransac_fit(corr, params, rotation=rotation)
        except NoConsensusError:
            raise
        inlier_count = int(inliers.sum())
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    residuals = np.linalg.norm(
        corr.camera - (sim.s * (corr.normalized @ sim.r.m.T) + sim.t), axis=1
    )
    result = {
        "estimator": estimator,
        "s": sim.s,
        "R": sim.r.m,
        "T": sim.t,
        "residual": {
            "rms": float(np.sqrt(np.mean(residuals**2))),
            "mean": float(residuals.mean()),
            "max": float(residuals.max()),
        },
        "count": len(corr),
    }
    if theta is not None:
        result["theta"] = float(theta)
    if inlier_count is not None:
        result["inliers"] = inlier_count
    return result
