#!/usr/bin/env python3
"""Build the 5-class MNIST subset shipped in data/mnist-subset.

Inputs are two redistributions of MNIST digits:
  * mlxtend wheel: mlxtend/data/data/mnist_5k.csv.gz (784 pixels + label per row)
  * npm `mnist` tarball: package/src/digits/<d>.json (pixels scaled to [0, 1])

Writes gzipped IDX files with 5000 training and 1000 test images of digits 0-4.
"""
import argparse
import gzip
import json
import random
import struct
import tarfile
import zipfile
from pathlib import Path

CLASSES = range(5)


def mlxtend_digits(wheel):
    with zipfile.ZipFile(wheel) as z:
        rows = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode().splitlines()
    out = []
    for row in rows:
        vals = [int(float(v)) for v in row.split(",")]
        if vals[-1] in CLASSES:
            out.append((bytes(vals[:-1]), vals[-1]))
    return out


def npm_digits(tgz):
    out = []
    with tarfile.open(tgz) as t:
        for d in CLASSES:
            data = json.load(t.extractfile(f"package/src/digits/{d}.json"))["data"]
            for k in range(0, len(data), 784):
                px = bytes(min(255, round(v * 255)) for v in data[k : k + 784])
                out.append((px, d))
    return out


def write_idx(path, samples):
    n = len(samples)
    with gzip.GzipFile(path.with_suffix(".tmp"), "wb", mtime=0) as f:
        if path.name.startswith(("train-images", "t10k-images")):
            f.write(struct.pack(">IIII", 0x0803, n, 28, 28))
            for px, _ in samples:
                f.write(px)
        else:
            f.write(struct.pack(">II", 0x0801, n))
            f.write(bytes(lbl for _, lbl in samples))
    path.with_suffix(".tmp").rename(path)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mlxtend-wheel", required=True)
    ap.add_argument("--npm-tarball", required=True)
    ap.add_argument("--out", default="data/mnist-subset")
    ap.add_argument("--train", type=int, default=5000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    a = mlxtend_digits(args.mlxtend_wheel)
    b = npm_digits(args.npm_tarball)
    rng.shuffle(b)
    test = b[: args.test]
    train = a + b[args.test :]
    rng.shuffle(train)
    train = train[: args.train]
    if len(train) < args.train:
        raise SystemExit(f"only {len(train)} training digits available")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", train)
    write_idx(out / "train-labels-idx1-ubyte.gz", train)
    write_idx(out / "t10k-images-idx3-ubyte.gz", test)
    write_idx(out / "t10k-labels-idx1-ubyte.gz", test)
    print(f"wrote {len(train)} train / {len(test)} test digits to {out}")


if __name__ == "__main__":
    main()
