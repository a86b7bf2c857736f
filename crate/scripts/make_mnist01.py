#!/usr/bin/env python3
"""Build the bundled 2-class (0/1) MNIST subset in IDX format.

The source is the 5000-image MNIST sample shipped inside the `mlxtend`
wheel (mlxtend/data/data/mnist_5k.csv.gz, 785 columns: 784 pixels then the
label). Digits 0 and 1 are split per class, in file order, into 400 train and
100 test images and written as standard IDX files:

    train-images-idx3-ubyte  train-labels-idx1-ubyte
    t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte

Usage: make_mnist01.py OUT_DIR [WHEEL]
"""
import glob
import gzip
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

TRAIN_PER_CLASS = 400
TEST_PER_CLASS = 100


def wheel_path(arg):
    if arg:
        return arg
    tmp = tempfile.mkdtemp()
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "mlxtend==0.24.0", "--no-deps", "-d", tmp]
    )
    return glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]


def write_idx(out_dir, prefix, images, labels):
    with open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    out_dir = sys.argv[1]
    whl = wheel_path(sys.argv[2] if len(sys.argv) > 2 else None)
    raw = zipfile.ZipFile(whl).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().strip().split("\n")
    by_class = {0: [], 1: []}
    for row in rows:
        vals = [int(float(v)) for v in row.split(",")]
        label = vals[-1]
        if label in by_class:
            by_class[label].append(vals[:-1])
    train, test = [], []
    for label, imgs in by_class.items():
        train += [(img, label) for img in imgs[:TRAIN_PER_CLASS]]
        test += [(img, label) for img in imgs[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    os.makedirs(out_dir, exist_ok=True)
    write_idx(out_dir, "train", [i for i, _ in train], [l for _, l in train])
    write_idx(out_dir, "t10k", [i for i, _ in test], [l for _, l in test])


if __name__ == "__main__":
    main()
