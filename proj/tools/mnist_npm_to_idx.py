#!/usr/bin/env python3
"""Convert the digit samples bundled with the `mnist` npm package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) ships about 10,000 MNIST
digits as JSON arrays of 784 floats in [0, 1], rounded to three decimals. This
script maps each value back to the nearest byte and writes the four standard
IDX files (gzip-compressed), splitting every digit deterministically: the first
`--train-fraction` of its samples go to the training files, the rest to t10k.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_npm_to_idx.py package/src/digits data/mnist --digits 1 7
"""
import argparse
import gzip
import json
import pathlib
import struct

PIXELS = 28 * 28


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(struct.pack(">I", magic))
        for d in dims:
            fh.write(struct.pack(">I", d))
        fh.write(payload)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--digits", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()

    splits = {"train": ([], []), "t10k": ([], [])}
    for digit in args.digits:
        data = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        count = len(data) // PIXELS
        n_train = int(round(args.train_fraction * count))
        for i in range(count):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in data[i * PIXELS:(i + 1) * PIXELS])
            images, labels = splits["train" if i < n_train else "t10k"]
            images.append(pixels)
            labels.append(digit)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, (images, labels) in splits.items():
        write_idx(args.out_dir / f"{name}-images-idx3-ubyte.gz", 2051, (len(images), 28, 28), b"".join(images))
        write_idx(args.out_dir / f"{name}-labels-idx1-ubyte.gz", 2049, (len(labels),), bytes(labels))
        print(f"{name}: {len(labels)} examples")


if __name__ == "__main__":
    main()
