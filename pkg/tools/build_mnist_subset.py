"""Rebuild data/mnist5k/ from the MNIST sample bundled in the mlxtend wheel.

The wheel ships 5000 real MNIST digits (500 per class, sorted by label) as
CSV. They are shuffled with a fixed seed and written as gzipped IDX files:
4000 training and 1000 test images.

    pip download --no-deps mlxtend -d /tmp/mlx
    python tools/build_mnist_subset.py /tmp/mlx/mlxtend-*.whl
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "data" / "mnist5k"


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    # mtime=0 keeps the archives byte-stable across rebuilds
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(header + array.astype(np.uint8).tobytes())


def main(wheel):
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    table = np.loadtxt(io.StringIO(text), delimiter=",").astype(np.uint8)
    perm = np.random.default_rng(20240101).permutation(len(table))
    table = table[perm]
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1]
    OUT.mkdir(parents=True, exist_ok=True)
    write_idx(OUT / "train-images-idx3-ubyte.gz", images[:4000], 2051)
    write_idx(OUT / "train-labels-idx1-ubyte.gz", labels[:4000], 2049)
    write_idx(OUT / "t10k-images-idx3-ubyte.gz", images[4000:], 2051)
    write_idx(OUT / "t10k-labels-idx1-ubyte.gz", labels[4000:], 2049)


if __name__ == "__main__":
    main(sys.argv[1])
