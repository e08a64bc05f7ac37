"""Command line entry: CIFAR-10 directory in, two FVEC files out."""

import argparse
import sys

from .extract import FEATURE_DIM, ExtractionJob, extract


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cifarfeat",
        description="Export CIFAR-10 as 2048-dim pooled Inception-v3 "
        "features in FVEC format",
    )
    parser.add_argument(
        "--cifar-dir", required=True,
        help="directory holding cifar-10-batches-py",
    )
    parser.add_argument("--out-train", required=True, help="train FVEC path")
    parser.add_argument("--out-test", required=True, help="test FVEC path")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default="cpu", help="torch device hint")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(
            args.cifar_dir, args.out_train, args.out_test,
            args.batch_size, args.device,
        )
        written = extract(job)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path, n in written.items():
        print(f"{path}: {n} examples, dim {FEATURE_DIM}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
