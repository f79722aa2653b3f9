"""Command-line interface.

Each pipeline stage is independently invocable: ``validate`` checks a config,
``generate`` exports the task matrices, ``render`` fills the image cache,
``run`` executes the full experiment, and ``report`` recomputes the report
from existing records.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import runner
from .errors import ConfigurationError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the experiment YAML config")
    parser.add_argument("--out", default=None, help="override the config's output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    parser.add_argument("--backend", default=None, help="override every model's backend kind")


def _load(args) -> dict:
    cfg = runner.load_config(args.config)
    if args.out:
        cfg["out_dir"] = args.out
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.backend:
        cfg["backend_override"] = args.backend
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a config and exit")
    _add_common(p)

    p = sub.add_parser("generate", help="export the task matrices as a JSONL archive")
    _add_common(p)
    p.add_argument("--archive", default=None, help="archive path (default <out>/instances.jsonl)")

    p = sub.add_parser("render", help="fill the image render cache")
    _add_common(p)

    p = sub.add_parser("run", help="run the full experiment")
    _add_common(p)
    p.add_argument("--resume", action="store_true", help="reuse an existing output directory and cache")

    p = sub.add_parser("report", help="recompute the report from records.jsonl")
    _add_common(p)

    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "validate":
            errors = runner.validate_config(runner.normalize_config(cfg))
            if errors:
                for err in errors:
                    print(f"error: {err}", file=sys.stderr)
                return 1
            print("config ok")
            return 0
        if args.command == "generate":
            cfg = runner.normalize_config(cfg)
            out_dir = Path(cfg["out_dir"])
            out_dir.mkdir(parents=True, exist_ok=True)
            archive = Path(args.archive) if args.archive else out_dir / "instances.jsonl"
            count = runner.export_instances(cfg, archive)
            print(f"wrote {count} instances to {archive}")
            return 0
        if args.command == "render":
            r = runner.ExperimentRunner(runner.normalize_config(cfg))
            r.prepare_out_dir(resume=True)
            for task_kind in r.cfg["tasks"]:
                instances, _ = r._task_instances(task_kind)
                r.render_task_images(task_kind, instances)
                print(f"rendered {task_kind}: {len(instances)} instances")
            return 0
        if args.command == "run":
            out = runner.run_experiment(cfg, resume=args.resume)
            print(f"run complete: {out}")
            return 0
        if args.command == "report":
            cfg = runner.normalize_config(cfg)
            out_dir = Path(cfg["out_dir"])
            records = runner.read_records(out_dir / "records.jsonl")
            files = runner.emit_report(records, out_dir, cfg, runner.config_hash(cfg))
            print(f"wrote {len(files)} report files under {out_dir}")
            return 0
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
