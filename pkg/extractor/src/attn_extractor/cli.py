import argparse
import sys

from . import __version__
from .config import ExtractorConfig
from .errors import ExtractorError
from .extract import extract


def build_parser():
    p = argparse.ArgumentParser(
        prog="extract_attn",
        description="Generate images and write per-image attention bundles")
    p.add_argument("--version", action="version", version=f"extract_attn {__version__}")
    p.add_argument("--prompts", required=True, help="text file, one prompt per line")
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--guidance", type=float, default=7.5)
    p.add_argument("--image-size", type=int, default=512)
    p.add_argument("--backend", choices=("synthetic", "sd21"), default="synthetic")
    p.add_argument("--average-last-steps", type=int, default=1)
    p.add_argument("--model-id", default="stabilityai/stable-diffusion-2-1-base")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExtractorConfig(
        prompts_file=args.prompts,
        out_dir=args.out,
        seed=args.seed,
        steps=args.steps,
        guidance=args.guidance,
        image_size=args.image_size,
        backend=args.backend,
        average_last_steps=args.average_last_steps,
        model_id=args.model_id,
    )
    try:
        dirs = extract(cfg)
    except ExtractorError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {len(dirs)} bundle(s) under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
