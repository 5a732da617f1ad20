"""Command line entry points.

Exit codes: 0 = success, 2 = batch finished with per-bundle failures,
1 = fatal error.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bundle_io import FORMAT_VERSION
from .errors import SegsynthError
from .metrics import format_report_table
from .pipeline import PipelineConfig, evaluate_directories, run_pipeline, run_stage


def _load_config(path) -> PipelineConfig:
    if path:
        return PipelineConfig.from_json(path)
    return PipelineConfig()


def _add_stage_parser(sub, name, help_text, inputs):
    p = sub.add_parser(name, help=help_text)
    for flag in inputs:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int)
    return p


def build_parser():
    parser = argparse.ArgumentParser(
        prog="segsynth",
        description="Attention-bundle to VOC segmentation mask engine")
    parser.add_argument(
        "--version", action="version",
        version=f"segsynth {__version__} (bundle format v{FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full batch pipeline")
    p.add_argument("--config", required=True, help="pipeline config JSON")

    _add_stage_parser(sub, "condense", "write per-head component maps", ["bundle"])
    _add_stage_parser(sub, "features", "write the 4096xF feature matrix", ["bundle"])
    _add_stage_parser(sub, "cluster", "write per-K split cluster labelings", ["bundle"])
    _add_stage_parser(sub, "classify", "write the 64x64 voted mask",
                      ["bundle", "clusters"])
    _add_stage_parser(sub, "refine", "refine a low mask to image resolution",
                      ["image", "low_mask"])

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="write the JSON report here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "pipeline":
            manifest = run_pipeline(PipelineConfig.from_json(args.config))
            n_ok, n_fail = len(manifest["images"]), len(manifest["failures"])
            print(f"processed {n_ok} bundle(s), {n_fail} failure(s)")
            for f in manifest["failures"]:
                print(f"  FAILED {f['bundle']}: {f['error']}", file=sys.stderr)
            return 2 if n_fail else 0

        if args.command == "eval":
            report = evaluate_directories(args.pred, args.gt)
            print(format_report_table(report))
            if args.out:
                Path(args.out).write_text(json.dumps(report, indent=1))
            return 0

        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        inputs = {k: getattr(args, k, None)
                  for k in ("bundle", "clusters", "image", "low_mask")}
        inputs["out"] = args.out
        artifact = run_stage(args.command, inputs, cfg)
        print(artifact)
        return 0
    except SegsynthError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
