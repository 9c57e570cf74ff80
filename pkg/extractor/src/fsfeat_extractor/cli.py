"""Command line for the embedding exporter: extract / init-weights."""

from __future__ import annotations

import argparse
import logging
import sys

from .backbone import BACKBONES, create_checkpoint
from .extract import ExtractionConfig, extract


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsfeat-extract",
        description="Export frozen convolutional embeddings of an image "
        "folder into an FSFEAT01 feature store.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="embed an image folder")
    ex.add_argument("--root", required=True, help="dataset root: root/<class>/<images>")
    ex.add_argument("--out", required=True, help="output store path")
    ex.add_argument("--weights", required=True, help="backbone checkpoint file")
    ex.add_argument("--backbone", choices=sorted(BACKBONES), default="smallconv")
    ex.add_argument("--resolution", type=int, default=84)
    ex.add_argument("--batch-size", type=int, default=32)
    ex.add_argument("--device", default="cpu")
    ex.add_argument("--splits", default=None,
                    help="JSON file mapping split name to class names")
    ex.set_defaults(func=cmd_extract)

    init = sub.add_parser(
        "init-weights", help="write a deterministically seeded checkpoint"
    )
    init.add_argument("--backbone", choices=sorted(BACKBONES), default="smallconv")
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--out", required=True)
    init.set_defaults(func=cmd_init_weights)
    return parser


def cmd_extract(args) -> int:
    cfg = ExtractionConfig(
        dataset_root=args.root,
        output_path=args.out,
        weights_path=args.weights,
        backbone=args.backbone,
        resolution=args.resolution,
        batch_size=args.batch_size,
        device=args.device,
        split_file=args.splits,
    )
    summary = extract(cfg)
    print(
        f"wrote {args.out}: {summary.num_classes} classes, dim {summary.dim}, "
        f"{summary.images_embedded} embeddings ({summary.images_skipped} skipped)"
    )
    return 0


def cmd_init_weights(args) -> int:
    create_checkpoint(args.backbone, args.out, seed=args.seed)
    print(f"wrote {args.backbone} checkpoint (seed {args.seed}) to {args.out}")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
