"""Build MNIST IDX files from the digit subset bundled in the npm `mnist` package.

Usage: npm pack mnist && tar xzf mnist-*.tgz && python3 prepare_mnist.py package/src/digits OUT_DIR

The bundled digits are stored as floats rounded to three decimals; they are
mapped back to bytes with round(v * 255). Exact duplicates are dropped, the
remaining digits are shuffled with a fixed seed and split 8:2 into train/test.
"""
import json
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def main():
    digits_dir = Path(sys.argv[1])
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    xs, ys = [], []
    for d in range(10):
        data = json.loads((digits_dir / f"{d}.json").read_text())["data"]
        arr = np.round(np.asarray(data, dtype=np.float64).reshape(-1, 784) * 255.0)
        xs.append(arr.clip(0, 255).astype(np.uint8))
        ys.extend([d] * len(arr))
    x = np.concatenate(xs)
    y = np.asarray(ys, dtype=np.uint8)
    _, keep = np.unique(x, axis=0, return_index=True)
    keep = np.sort(keep)
    x, y = x[keep], y[keep]
    rng = np.random.default_rng(20191015)
    perm = rng.permutation(len(x))
    x, y = x[perm], y[perm]
    n_test = len(x) // 5
    write_idx_images(out / "train-images-idx3-ubyte", x[n_test:].reshape(-1, 28, 28))
    write_idx_labels(out / "train-labels-idx1-ubyte", y[n_test:])
    write_idx_images(out / "t10k-images-idx3-ubyte", x[:n_test].reshape(-1, 28, 28))
    write_idx_labels(out / "t10k-labels-idx1-ubyte", y[:n_test])
    print(f"train {len(x) - n_test}, test {n_test}")


if __name__ == "__main__":
    main()
