import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config_manager import ConfigManager
from exceptions import ConfigError, XPasteError
from Services.pipeline_workflow import DEFAULT_RETENTION_THRESHOLDS, PipelineWorkflow

logger = logging.getLogger(__name__)


def _thresholds(value: str) -> List[float]:
    try:
        return [float(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xpaste", description="Scalable Copy-Paste dataset synthesis")
    parser.add_argument("--config", type=Path, help="JSON pipeline configuration")
    parser.add_argument("--seed", type=int, help="composition seed (unsigned 64-bit)")
    parser.add_argument("--jobs", type=int, help="worker processes for filter and compose")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    commands = parser.add_subparsers(dest="command", required=True)

    select = commands.add_parser("select", help="pick the best candidate mask per instance")
    select.add_argument("--in", dest="input", type=Path)
    select.add_argument("--out", dest="output", type=Path, required=True)

    filter_ = commands.add_parser("filter", help="apply area, CLIP-threshold and background filters")
    filter_.add_argument("--in", dest="input", type=Path)
    filter_.add_argument("--out", dest="output", type=Path, required=True)
    filter_.add_argument("--report", type=Path)

    stats = commands.add_parser("stats", help="per-category scale statistics of a dataset")
    stats.add_argument("--in", dest="input", type=Path)
    stats.add_argument("--out", dest="output", type=Path)

    retention = commands.add_parser("retention", help="retention rate per frequency band and threshold")
    retention.add_argument("--in", dest="input", type=Path)
    retention.add_argument("--out", dest="output", type=Path, required=True)
    retention.add_argument("--thresholds", type=_thresholds, default=DEFAULT_RETENTION_THRESHOLDS)
    retention.add_argument("--d", type=float, default=None,
                           help="subtractive margin; omit for the plain score >= t rule")
    retention.add_argument("--dataset", type=Path, help="dataset providing category frequency bands")

    compose = commands.add_parser("compose", help="compose Copy-Paste training images")
    compose.add_argument("--pool", type=Path)
    compose.add_argument("--dataset", type=Path)
    compose.add_argument("--stats", type=Path)
    compose.add_argument("--out", dest="output", type=Path)

    validate = commands.add_parser("validate", help="check every dataset invariant")
    validate.add_argument("--in", dest="input", type=Path)

    synth = commands.add_parser("synth", help="generate a synthetic pool and annotated dataset")
    synth.add_argument("--in", dest="input", type=Path, help="SynthSpec JSON")
    synth.add_argument("--out", dest="output", type=Path, required=True)
    return parser


def run(args: argparse.Namespace) -> int:
    manager = ConfigManager(args.config)
    config = manager.apply_overrides(manager.load(), seed=args.seed, jobs=args.jobs, log_level=args.log_level)
    logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT, force=True)
    workflow = PipelineWorkflow(config)

    if args.command == "select":
        result = workflow.select(args.input, args.output)
    elif args.command == "filter":
        result = workflow.filter(args.input, args.output, args.report)
    elif args.command == "stats":
        result = workflow.stats(args.input, args.output)
    elif args.command == "retention":
        result = workflow.retention(args.input, args.output, args.thresholds, args.d, args.dataset)
    elif args.command == "compose":
        result = workflow.compose(args.pool, args.dataset, args.stats, args.output)
    elif args.command == "validate":
        result = workflow.validate(args.input)
    else:
        result = workflow.synth(args.input, args.output)

    logger.info(f"{args.command}: {json.dumps(result)}")
    if result["status"] != "success":
        print(json.dumps(result), file=sys.stderr)
        return 1
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except XPasteError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return 1
    except ValidationError as e:
        error = ConfigError(str(e), [".".join(str(p) for p in err["loc"]) for err in e.errors()])
        print(json.dumps(error.to_dict()), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
