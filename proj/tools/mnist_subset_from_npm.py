#!/usr/bin/env python3
"""Build a small MNIST subset in gzip IDX format from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist) ships ~10k MNIST digits
as JSON arrays of pixel intensities scaled to [0, 1] and rounded to three
decimals. This script converts the first `--per-class` digits of every class
into a training split and the following `--per-class` digits into a test split,
shuffles each split with a fixed seed, and writes the four standard IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_subset_from_npm.py package/src/digits tests/data/mnist-subset
"""
import argparse
import gzip
import json
import random
import struct
from pathlib import Path


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + bytes(payload))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    train, test = [], []
    for label in range(10):
        raw = json.loads(Path(args.digits_dir, f"{label}.json").read_text())["data"]
        n = len(raw) // 784
        assert n >= 2 * args.per_class
        for k in range(2 * args.per_class):
            pixels = [min(255, max(0, round(v * 255))) for v in raw[k * 784:(k + 1) * 784]]
            (train if k < args.per_class else test).append((pixels, label))

    rng = random.Random(args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        rng.shuffle(split)
        images = [p for pixels, _ in split for p in pixels]
        labels = [lab for _, lab in split]
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x00000803, [len(split), 28, 28], images)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x00000801, [len(split)], labels)


if __name__ == "__main__":
    main()
