#!/usr/bin/env python3
"""Convert the 10k-digit MNIST subset shipped in the npm `mnist` package into IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_subset_to_idx.py package/src/digits data/mnist

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (first 80% of each digit)
and t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (remaining 20%). Pixels are
stored as round(255 * v).
"""
import json
import struct
import sys
from pathlib import Path


def write_idx(images, labels, img_path, lbl_path):
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(255.0 * v))) for v in img))
    with open(lbl_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        rows = json.loads((src / f"{digit}.json").read_text())["data"]
        count = len(rows) // 784
        images = [rows[i * 784:(i + 1) * 784] for i in range(count)]
        cut = (count * 8) // 10
        train += [(img, digit) for img in images[:cut]]
        test += [(img, digit) for img in images[cut:]]
    write_idx([t[0] for t in train], [t[1] for t in train],
              dst / "train-images-idx3-ubyte", dst / "train-labels-idx1-ubyte")
    write_idx([t[0] for t in test], [t[1] for t in test],
              dst / "t10k-images-idx3-ubyte", dst / "t10k-labels-idx1-ubyte")
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
