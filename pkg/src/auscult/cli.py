"""Command-line driver for the cached pipeline."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import AuscultError
from .ingest import TaskSpec
from .pipeline import Cache, ConfigError, PipelineConfig
from .synth import SynthConfig, write_synthetic_dataset

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TASK = 4


class TaskError(ValueError):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON pipeline config")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--task", help="task name (train/evaluate)")
    p.add_argument("--cache", type=Path, default=Path(".auscult-cache"), help="artifact directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="auscult", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("ingest", parents=[common], help="validate a dataset root and write the manifest")
    p.add_argument("root", type=Path)
    sub.add_parser("biosignals", parents=[common], help="derive the six biosignals per recording")
    sub.add_parser("features", parents=[common], help="write the window feature matrix")
    sub.add_parser("train", parents=[common], help="fit a model on all task subjects")
    sub.add_parser("evaluate", parents=[common], help="leave-one-subject-out evaluation")
    sub.add_parser("report", parents=[common], help="combined metrics table")
    p = sub.add_parser("synth", parents=[common], help="write the synthetic two-class dataset")
    p.add_argument("out", type=Path)
    p.add_argument("--subjects", type=int, default=SynthConfig.n_subjects)
    p.add_argument("--duration", type=float, default=SynthConfig.duration_s)
    return parser


def _config(args) -> PipelineConfig:
    d = {}
    if args.config is not None:
        d = PipelineConfig.load(args.config).to_dict()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        d["seed"] = args.seed
    return PipelineConfig.from_dict(d)


def _tasks(args, cfg: PipelineConfig) -> list[str]:
    names = [args.task] if args.task else list(cfg.tasks)
    for n in names:
        try:
            TaskSpec.named(n)
        except ValueError as e:
            raise TaskError(str(e)) from None
    return names


def run_command(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as e:
        return _fail(f"config error: {e}", EXIT_CONFIG)
    except TaskError as e:
        return _fail(f"task error: {e}", EXIT_TASK)
    except OSError as e:
        return _fail(f"I/O error: {e}", EXIT_IO)
    except (AuscultError, ValueError) as e:
        return _fail(f"error: {e}", EXIT_ERROR)


def _fail(msg: str, code: int) -> int:
    print(f"auscult: {msg}".splitlines()[0], file=sys.stderr)
    return code


def _dispatch(args) -> int:
    cfg = _config(args)
    cache = Cache(args.cache)
    cmd = args.command
    if cmd == "synth":
        root = write_synthetic_dataset(args.out, SynthConfig(n_subjects=args.subjects,
                                                             duration_s=args.duration, seed=cfg.seed))
        print(root)
    elif cmd == "ingest":
        doc = pipeline.ingest(args.root, cfg, cache, args.jobs)
        print(f"{len(doc['subjects'])} subjects, {len(doc['recordings'])} recordings, "
              f"{len(doc['skipped'])} skipped -> {cache.path('manifest.tsv')}")
    elif cmd == "biosignals":
        items = pipeline.biosignals(cfg, cache, args.jobs)
        print(f"{len(items)} biosignal bundles in {cache.path('biosignals')}")
    elif cmd == "features":
        print(pipeline.features(cfg, cache, args.jobs))
    elif cmd == "train":
        for t in _tasks(args, cfg):
            print(pipeline.train(cfg, cache, t, args.jobs))
    elif cmd == "evaluate":
        for t in _tasks(args, cfg):
            path, rep = pipeline.evaluate(cfg, cache, t, args.jobs)
            metrics = rep.metrics if rep is not None else json.loads(path.read_text())["metrics"]
            shown = ", ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items()) if v is not None)
            print(f"{t}: {shown} -> {path}")
    elif cmd == "report":
        print(pipeline.report(cfg, cache), end="")
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
