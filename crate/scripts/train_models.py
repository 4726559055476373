"""Train the small models shipped under data/ and write them in the JSON model format.

Usage: python3 train_models.py MNIST_IDX_DIR OUT_DIR

Writes:
  mnist_mlp_3x100.json   784-100-100-100-10 ReLU MLP trained on the IDX train split
  rgb_tiny.json          192-32-32-4 ReLU MLP on synthetic 8x8 color images
  rgb_synthetic.json     held-out synthetic color images (dataset JSON)
"""
import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn


def read_idx(path):
    raw = Path(path).read_bytes()
    magic = struct.unpack(">I", raw[:4])[0]
    ndim = magic & 0xFF
    dims = struct.unpack(">" + "I" * ndim, raw[4 : 4 + 4 * ndim])
    return np.frombuffer(raw[4 + 4 * ndim :], dtype=np.uint8).reshape(dims)


def mlp(sizes):
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i + 2 < len(sizes):
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def to_json(model, input_shape, num_classes):
    layers = []
    for m in model:
        if isinstance(m, nn.Linear):
            layers.append(
                {
                    "kind": "affine",
                    "weights": m.weight.detach().double().numpy().tolist(),
                    "bias": m.bias.detach().double().numpy().tolist(),
                }
            )
        elif isinstance(m, nn.ReLU):
            layers.append({"kind": "relu"})
    return {"input_shape": list(input_shape), "num_classes": num_classes, "layers": layers}


def shift_batch(x, max_shift=2):
    # x: (n, 28, 28); random integer translations with zero fill
    out = torch.zeros_like(x)
    n = x.shape[0]
    dx = torch.randint(-max_shift, max_shift + 1, (n,))
    dy = torch.randint(-max_shift, max_shift + 1, (n,))
    for k in range(n):
        out[k] = torch.roll(x[k], shifts=(int(dy[k]), int(dx[k])), dims=(0, 1))
    return out


def fit(model, x, y, epochs, lr, augment=None, seed=0):
    torch.manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, epochs)
    loss_fn = nn.CrossEntropyLoss()
    n = x.shape[0]
    for _ in range(epochs):
        perm = torch.randperm(n)
        for i in range(0, n, 64):
            idx = perm[i : i + 64]
            xb = x[idx]
            if augment is not None:
                xb = augment(xb)
            opt.zero_grad()
            loss = loss_fn(model(xb.reshape(len(idx), -1)), y[idx])
            loss.backward()
            opt.step()
        sched.step()


def accuracy(model, x, y):
    with torch.no_grad():
        return (model(x.reshape(x.shape[0], -1)).argmax(1) == y).double().mean().item()


def train_mnist(idx_dir, out):
    xtr = torch.tensor(read_idx(idx_dir / "train-images-idx3-ubyte") / 255.0, dtype=torch.float32)
    ytr = torch.tensor(read_idx(idx_dir / "train-labels-idx1-ubyte").astype(np.int64))
    xte = torch.tensor(read_idx(idx_dir / "t10k-images-idx3-ubyte") / 255.0, dtype=torch.float32)
    yte = torch.tensor(read_idx(idx_dir / "t10k-labels-idx1-ubyte").astype(np.int64))
    torch.manual_seed(0)
    model = mlp([784, 100, 100, 100, 10])
    fit(model, xtr, ytr, epochs=40, lr=1e-3, augment=lambda b: shift_batch(b, 1))
    model.eval()
    print(f"mnist test accuracy {accuracy(model, xte, yte):.4f}")
    (out / "mnist_mlp_3x100.json").write_text(json.dumps(to_json(model, (28, 28, 1), 10)))


def hsl_to_rgb(h, s, l):
    # h on the [0,6) scale
    c = (1 - abs(2 * l - 1)) * s
    x = c * (1 - abs(h % 2 - 1))
    m = l - c / 2
    sector = int(h) % 6
    r, g, b = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][sector]
    return r + m, g + m, b + m


def synthetic_rgb(n, rng):
    """8x8 images: a square blob of one of four hues on a dim gray background."""
    hues = [0.0, 1.5, 3.0, 4.5]
    xs, ys = [], []
    for _ in range(n):
        label = int(rng.integers(4))
        img = np.full((8, 8, 3), rng.uniform(0.1, 0.3))
        img += rng.normal(0, 0.02, size=img.shape)
        size = int(rng.integers(3, 6))
        r0, c0 = rng.integers(0, 8 - size + 1, size=2)
        h = (hues[label] + rng.uniform(-0.35, 0.35)) % 6
        s = rng.uniform(0.6, 1.0)
        l = rng.uniform(0.4, 0.6)
        img[r0 : r0 + size, c0 : c0 + size] = hsl_to_rgb(h, s, l)
        xs.append(np.clip(img, 0, 1))
        ys.append(label)
    return np.asarray(xs), np.asarray(ys)


def train_rgb(out):
    rng = np.random.default_rng(7)
    xtr, ytr = synthetic_rgb(4000, rng)
    xte, yte = synthetic_rgb(200, rng)
    torch.manual_seed(1)
    model = mlp([192, 32, 32, 4])
    fit(
        model,
        torch.tensor(xtr, dtype=torch.float32),
        torch.tensor(ytr),
        epochs=30,
        lr=2e-3,
    )
    model.eval()
    print(f"rgb test accuracy {accuracy(model, torch.tensor(xte, dtype=torch.float32), torch.tensor(yte)):.4f}")
    (out / "rgb_tiny.json").write_text(json.dumps(to_json(model, (8, 8, 3), 4)))
    images = [
        {
            "height": 8,
            "width": 8,
            "channels": 3,
            "label": int(yy),
            "pixels": [round(float(v), 6) for v in xx.reshape(-1)],
        }
        for xx, yy in zip(xte, yte)
    ]
    (out / "rgb_synthetic.json").write_text(json.dumps({"images": images}))


def main():
    idx_dir = Path(sys.argv[1])
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train_mnist(idx_dir, out)
    train_rgb(out)


if __name__ == "__main__":
    main()
