#!/usr/bin/env python3
"""
Command-line interface
======================

    whcn <subcommand> [--config FILE] [--set KEY=VALUE ...] [--seed N] [--workdir DIR]

Staged subcommands (``synth``, ``features``, ``partition``, ``seeds``,
``hypergraph``, ``train``, ``evaluate``) each run one stage against the
artifacts in the work directory. ``run-all`` runs every stage, ``ablate``
runs the five-row ablation suite.

Exit codes: 0 success, 1 stage or I/O failure, 2 invalid configuration.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from src.pipeline.config import load_config, parse_overrides
from src.pipeline.report import EvalReport, emit_ablation, emit_report
from src.pipeline.runner import PseudoLabelPipeline, run_ablation
from src.pipeline.workspace import Workspace
from src.utils.errors import InvalidConfig, WhcnError
from src.utils.log import setup_logging

logger = logging.getLogger(__name__)

CLI_STAGES = {
    "synth": ("synth",),
    "features": ("features",),
    "partition": ("partition",),
    "seeds": ("seeds",),
    "hypergraph": ("hypergraph",),
    "train": ("train", "expand"),
    "evaluate": ("evaluate",),
}
DEFAULT_ABLATION_SEEDS = "0,1,2,3,4,5,6,7,8,9"


def parse_seed_list(text: str) -> List[int]:
    """``"0,1,2"`` or ``"0-9"`` (inclusive) to a list of ints."""
    seeds: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            seeds.extend(range(int(lo), int(hi) + 1) if sep else [int(part)])
        except ValueError:
            raise InvalidConfig(f"cannot read seed list '{text}'") from None
    if not seeds:
        raise InvalidConfig("seed list is empty")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=value config file (default: $WHCN_CONFIG)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="override rng_seed")
    common.add_argument("--workdir", default=os.getenv("WHCN_OUTPUT_DIR", "output"),
                        help="artifact directory (default: $WHCN_OUTPUT_DIR or ./output)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default: $WHCN_LOG_LEVEL)")

    parser = argparse.ArgumentParser(prog="whcn", description="Scene-label to point-label pseudo labeling")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "features", "partition", "seeds", "hypergraph", "train"):
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    for name in ("evaluate", "run-all"):
        p = sub.add_parser(name, parents=[common], help="evaluate pseudo labels" if name == "evaluate"
                           else "run every stage")
        p.add_argument("--report", help="report path (default: <workdir>/report.json)")
    ablate = sub.add_parser("ablate", parents=[common], help="run the ablation suite")
    ablate.add_argument("--seeds", default=DEFAULT_ABLATION_SEEDS, help="suite seeds, e.g. 0-9 or 0,3,5")
    ablate.add_argument("--output", help="ablation JSON path (default: <workdir>/ablation.json)")
    return parser


def print_report(report: EvalReport) -> None:
    print("-" * 60)
    print(report.iou_table().to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print("-" * 60)
    print(f"mIoU:              {report.miou:.4f}")
    print(f"Seed-only mIoU:    {report.seed_miou:.4f}")
    if report.propagation_miou is not None:
        print(f"Propagation mIoU:  {report.propagation_miou:.4f}")
    print(f"Seed coverage:     {report.seed_coverage:.4f}")


def run_staged(command: str, args, config) -> int:
    workspace = Workspace(args.workdir)
    pipeline = PseudoLabelPipeline(config, workspace)
    stages = CLI_STAGES[command]
    if stages[0] != "synth":
        workspace.restore(pipeline, before=stages[0])
    for stage in stages:
        summary = pipeline.run_stage(stage)
        print(f"✓ {stage}: {summary}")
    if command == "evaluate":
        report_path = args.report or workspace.path("report.json")
        emit_report(pipeline.report, report_path)
        print_report(pipeline.report)
        print(f"Report written to {report_path}")
    return 0


def run_all(args, config) -> int:
    workspace = Workspace(args.workdir)
    pipeline = PseudoLabelPipeline(config, workspace)
    report = pipeline.run()
    report.timings = dict(pipeline.timings)
    report_path = args.report or workspace.path("report.json")
    emit_report(report, report_path)
    print_report(report)
    print(f"Report written to {report_path}")
    return 0


def run_ablate(args, config) -> int:
    seeds = parse_seed_list(args.seeds)
    print(f"Running ablation over {len(seeds)} seed(s)...")
    result = run_ablation(config, seeds)
    os.makedirs(args.workdir, exist_ok=True)
    output = args.output or os.path.join(args.workdir, "ablation.json")
    csv_path = emit_ablation(result, output)
    print(result.table().to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(f"Ablation written to {output} and {csv_path}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = load_config(args.config, parse_overrides(args.set), args.seed)
        if args.command == "run-all":
            return run_all(args, config)
        if args.command == "ablate":
            return run_ablate(args, config)
        return run_staged(args.command, args, config)
    except InvalidConfig as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 2
    except WhcnError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
