#!/usr/bin/env python3
"""Cut a class-stratified, deterministic subset out of MNIST IDX files.

For each class the first `per_class` samples in original file order are
kept, preserving the original interleaving. This is how the bundled
data/mnist files were produced from the official dataset:

    python3 scripts/subset_mnist.py --src /path/to/full/mnist --dst data/mnist \
        --train-per-class 1200 --test-per-class 200
"""

import argparse
import struct
from pathlib import Path

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def read_idx_pair(images_path: Path, labels_path: Path):
    raw = images_path.read_bytes()
    magic, count, rows, cols = struct.unpack_from(">IIII", raw, 0)
    if magic != IMAGES_MAGIC:
        raise ValueError(f"{images_path}: bad magic {magic:#x}")
    pixels = rows * cols
    images = [raw[16 + i * pixels : 16 + (i + 1) * pixels] for i in range(count)]

    raw = labels_path.read_bytes()
    magic, lcount = struct.unpack_from(">II", raw, 0)
    if magic != LABELS_MAGIC:
        raise ValueError(f"{labels_path}: bad magic {magic:#x}")
    if lcount != count:
        raise ValueError(f"count mismatch: {count} images vs {lcount} labels")
    labels = list(raw[8 : 8 + lcount])
    return images, labels, rows, cols


def write_idx_pair(images, labels, rows, cols, images_path: Path, labels_path: Path):
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, len(images), rows, cols))
        for img in images:
            f.write(img)
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, len(labels)))
        f.write(bytes(labels))


def stratified_prefix(images, labels, per_class):
    taken = {}
    out_images, out_labels = [], []
    for img, label in zip(images, labels):
        if taken.get(label, 0) < per_class:
            taken[label] = taken.get(label, 0) + 1
            out_images.append(img)
            out_labels.append(label)
    short = {c: n for c, n in taken.items() if n < per_class}
    if short:
        raise ValueError(f"not enough samples for classes {short}")
    return out_images, out_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--src", type=Path, required=True, help="directory with full MNIST IDX files")
    ap.add_argument("--dst", type=Path, required=True)
    ap.add_argument("--train-per-class", type=int, default=1200)
    ap.add_argument("--test-per-class", type=int, default=200)
    args = ap.parse_args()

    args.dst.mkdir(parents=True, exist_ok=True)
    for prefix, per_class in (
        ("train", args.train_per_class),
        ("t10k", args.test_per_class),
    ):
        images, labels, rows, cols = read_idx_pair(
            args.src / f"{prefix}-images-idx3-ubyte",
            args.src / f"{prefix}-labels-idx1-ubyte",
        )
        images, labels = stratified_prefix(images, labels, per_class)
        write_idx_pair(
            images,
            labels,
            rows,
            cols,
            args.dst / f"{prefix}-images-idx3-ubyte",
            args.dst / f"{prefix}-labels-idx1-ubyte",
        )
        print(f"{prefix}: wrote {len(labels)} samples ({per_class} per class)")


if __name__ == "__main__":
    main()
