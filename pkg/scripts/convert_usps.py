#!/usr/bin/env python3
"""Convert raw USPS text files (zip.train / zip.test) to IDX.

The raw USPS distribution stores one example per line: the digit label
followed by 256 grayscale values in [-1, 1], row-major for a 16x16 image.
This writes the same IDX layout MNIST ships in, so the digit loader treats
both domains uniformly:

    <out>/train-images-idx3-ubyte
    <out>/train-labels-idx1-ubyte
    <out>/test-images-idx3-ubyte
    <out>/test-labels-idx1-ubyte

Usage:
    python scripts/convert_usps.py zip.train zip.test <data-root>/usps
"""

import argparse
import gzip
import sys
from pathlib import Path

import numpy as np

from clarinet.datasets import save_idx

IMAGE_SIZE = 16


def read_usps_text(path):
    """Parse one raw USPS split into uint8 images and int64 labels."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt") as fh:
        table = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if table.ndim != 2 or table.shape[1] != 1 + IMAGE_SIZE * IMAGE_SIZE:
        raise ValueError(
            f"{path}: expected rows of label + {IMAGE_SIZE * IMAGE_SIZE} pixels, "
            f"got shape {table.shape}"
        )
    labels = table[:, 0]
    if not np.array_equal(labels, np.round(labels)) or labels.min() < 0 or labels.max() > 9:
        raise ValueError(f"{path}: labels must be digits 0-9")
    pixels = table[:, 1:].reshape(-1, IMAGE_SIZE, IMAGE_SIZE)
    # [-1, 1] -> [0, 255]; clip first because some rows overshoot slightly
    images = np.round(np.clip((pixels + 1.0) / 2.0, 0.0, 1.0) * 255.0)
    return images.astype(np.uint8), labels.astype(np.int64)


def convert_split(src_path, out_dir, split):
    images, labels = read_usps_text(src_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_idx(images, out_dir / f"{split}-images-idx3-ubyte")
    save_idx(labels.astype(np.uint8), out_dir / f"{split}-labels-idx1-ubyte")
    return len(labels)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("train", help="raw train split (zip.train, optionally .gz)")
    parser.add_argument("test", help="raw test split (zip.test, optionally .gz)")
    parser.add_argument("out", help="output directory, e.g. <data-root>/usps")
    args = parser.parse_args(argv)
    n_train = convert_split(args.train, args.out, "train")
    n_test = convert_split(args.test, args.out, "test")
    print(f"wrote {n_train} train and {n_test} test examples to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
