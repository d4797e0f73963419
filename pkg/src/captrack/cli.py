"""Command-line entry point: captrack generate|track|eval|robustness|fit.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 degenerate
input or fatal lost track.  CAPTRACK_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import trajio
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DegeneracyError, LostTrackError, NoConsensusError
from .fitting import RansacParams
from .harness import cmd_eval, cmd_fit, cmd_generate, cmd_robustness, cmd_track

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DEGENERATE = 4

_EPILOG = (
    "exit codes: 0 success, 2 config error, 3 I/O error, "
    "4 degenerate input / lost track. Set CAPTRACK_LOG=DEBUG|INFO|WARNING for logging."
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="captrack",
        description="Synthetic 9DoF pose-tracking pipeline: generation, tracking, evaluation.",
        epilog=_EPILOG,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", type=Path, help="override the output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel workers over trajectories")

    p_gen = sub.add_parser("generate", help="write trajectory files and a manifest", epilog=_EPILOG)
    common(p_gen)

    p_track = sub.add_parser("track", help="run the tracker over trajectory files", epilog=_EPILOG)
    common(p_track)
    p_track.add_argument("trajectories", nargs="+", type=Path, help="trajectory .jsonl files")

    p_eval = sub.add_parser("eval", help="score predicted states against ground truth", epilog=_EPILOG)
    common(p_eval)
    p_eval.add_argument("--pred", nargs="+", type=Path, required=True)
    p_eval.add_argument("--gt", nargs="+", type=Path, required=True)

    p_rob = sub.add_parser("robustness", help="run the five-setting noise sweep", epilog=_EPILOG)
    common(p_rob)

    p_fit = sub.add_parser("fit", help="fit a transform to a correspondence file", epilog=_EPILOG)
    p_fit.add_argument("correspondences", type=Path)
    p_fit.add_argument(
        "--estimator",
        choices=("umeyama", "given-rot", "symmetric", "ransac"),
        default="umeyama",
    )
    p_fit.add_argument("--ransac-iters", type=int, default=256)
    p_fit.add_argument("--ransac-thresh", type=float, default=0.01)
    p_fit.add_argument("--ransac-seed", type=int, default=0)
    p_fit.add_argument("--out", type=Path, help="also write the result JSON here")
    return parser


def _load_config(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = str(args.out)
    if args.config is None:
        return ExperimentConfig(**overrides) if overrides else ExperimentConfig()
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CAPTRACK_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"captrack: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"captrack: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"captrack: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DegeneracyError, LostTrackError, NoConsensusError) as exc:
        print(f"captrack: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"captrack: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args) -> int:
    if args.command == "generate":
        cfg = _load_config(args)
        paths = cmd_generate(cfg, workers=args.workers)
        print("\n".join(str(p) for p in paths))
        return EXIT_OK
    if args.command == "track":
        cfg = _load_config(args)
        for p in args.trajectories:
            if not Path(p).exists():
                raise FileNotFoundError(str(p))
        paths = cmd_track(cfg, args.trajectories, workers=args.workers)
        print("\n".join(str(p) for p in paths))
        return EXIT_OK
    if args.command == "eval":
        cfg = _load_config(args)
        for p in list(args.pred) + list(args.gt):
            if not Path(p).exists():
                raise FileNotFoundError(str(p))
        _, aggregate = cmd_eval(cfg, args.pred, args.gt, out_dir=cfg.out_dir, workers=args.workers)
        print(trajio.dumps_canonical(aggregate.to_dict()))
        return EXIT_OK
    if args.command == "robustness":
        cfg = _load_config(args)
        results = cmd_robustness(cfg, workers=args.workers)
        for name, report in results.items():
            print(f"{name}: acc_5deg5cm={report.acc_5deg5cm:.4f} mIoU={report.mean_iou:.4f}")
        return EXIT_OK
    if args.command == "fit":
        if not Path(args.correspondences).exists():
            raise FileNotFoundError(str(args.correspondences))
        params = RansacParams(
            iterations=args.ransac_iters,
            inlier_threshold=args.ransac_thresh,
            seed=args.ransac_seed,
        )
        result = cmd_fit(args.correspondences, estimator=args.estimator, ransac=params)
        payload = trajio.dumps_canonical(_plain(result))
        print(payload)
        if args.out is not None:
            Path(args.out).write_text(payload + "\n", encoding="utf-8")
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


if __name__ == "__main__":
    raise SystemExit(main())
