"""Convert the digit JSON files of the npm `mnist` package (1001 images per
class, 28x28 floats in [0,1]) into gzipped IDX files.

usage: python3 scripts/mnist_from_npm.py <package>/src/digits data/mnist
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

TEST_PER_CLASS = 201


def write_idx(path, data, dims):
    magic = 0x0803 if len(dims) == 3 else 0x0801
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(data.astype(np.uint8).tobytes())


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    train, test = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((src / f"{digit}.json").read_text())["data"], dtype=np.float64)
        imgs = np.rint(raw.reshape(-1, 28, 28) * 255.0).clip(0, 255)
        order = rng.permutation(len(imgs))
        test += [(imgs[i], digit) for i in order[:TEST_PER_CLASS]]
        train += [(imgs[i], digit) for i in order[TEST_PER_CLASS:]]
    for name, rows in (("train", train), ("t10k", test)):
        perm = rng.permutation(len(rows))
        x = np.stack([rows[i][0] for i in perm])
        y = np.asarray([rows[i][1] for i in perm])
        write_idx(dst / f"{name}-images-idx3-ubyte.gz", x, (len(x), 28, 28))
        write_idx(dst / f"{name}-labels-idx1-ubyte.gz", y, (len(y),))
        print(name, len(x))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
