"""Command line interface: `wavlm-extract extract ...`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractionRequest, extract, extract_all_layers, load_variant_model
from .model import SetupError, Variant


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavlm-extract",
        description="Layer-wise WavLM speech representations as FTR1 feature files",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract one layer (or all layers) from a WAV file")
    p.add_argument("--wav", required=True, help="16 kHz mono PCM WAV input")
    p.add_argument("--layer", type=int, default=None,
                   help="layer index 0..24 (0 = conv encoder output)")
    p.add_argument("--all-layers", action="store_true",
                   help="write layer00.ftr .. layer24.ftr in one pass")
    p.add_argument("--variant", required=True,
                   choices=[v.value for v in Variant])
    p.add_argument("--out", required=True,
                   help="output file (single layer) or directory (--all-layers)")
    p.add_argument("--checkpoint", "-c", default=None,
                   help="local WavLM Large checkpoint directory")
    p.add_argument("--seed", type=int, default=0, help="weight seed for random-init")
    p.add_argument("--span-s", type=float, default=6.0, help="attention span in seconds")
    p.set_defaults(func=_cmd_extract)
    return parser


def _cmd_extract(args) -> int:
    variant = Variant(args.variant)
    checkpoint = Path(args.checkpoint) if args.checkpoint else None
    if args.all_layers == (args.layer is not None):
        print("error: pass exactly one of --layer or --all-layers", file=sys.stderr)
        return 2
    if args.all_layers:
        paths = extract_all_layers(
            args.wav, variant, args.out,
            attention_span_s=args.span_s, checkpoint=checkpoint, seed=args.seed,
        )
        print(f"wrote {len(paths)} layer files to {args.out}")
    else:
        model = load_variant_model(variant, checkpoint, args.seed)
        req = ExtractionRequest(
            wav=Path(args.wav), layer=args.layer, variant=variant, out=Path(args.out),
            attention_span_s=args.span_s, checkpoint=checkpoint, seed=args.seed,
        )
        path = extract(req, model=model)
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SetupError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
