#!/usr/bin/env python3
"""Generate the desk-scale fixture: a trained 64->32->10 dense classifier.

Training happens here, offline; the shipped engine only runs inference.
Writes float weights + manifest, a calibration split (used to profile
activation bounds and input range), and a held-out test split.

Run from the repo root:  python scripts/make_fixtures.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from bitfault.io import save_dataset, save_model
from bitfault.multipliers import MultConfig
from bitfault.network import Bounds, LayerSpec, QuantizedNetwork, profile_input_bounds, profile_ranges

SEED = 20240
IN_DIM, H1, H2, CLASSES = 64, 32, 32, 10
N_TRAIN, N_CALIB, N_TEST = 4096, 128, 256
MEAN_SCALE = 1.0
NOISE = 2.4


def make_blobs(rng, n_per_class):
    means = rng.normal(0.0, MEAN_SCALE, size=(CLASSES, IN_DIM))
    X, y = [], []
    for c in range(CLASSES):
        X.append(means[c] + rng.normal(0.0, NOISE, size=(n_per_class, IN_DIM)))
        y.append(np.full(n_per_class, c))
    X = np.concatenate(X)
    y = np.concatenate(y)
    order = rng.permutation(len(y))
    return X[order], y[order]


DIMS = [IN_DIM, H1, H2, CLASSES]


def train_mlp(rng, X, y, epochs=500, lr=0.01):
    params = {}
    for i in range(len(DIMS) - 1):
        params[f"w{i}"] = rng.normal(0, np.sqrt(2.0 / DIMS[i]), size=(DIMS[i + 1], DIMS[i]))
        params[f"b{i}"] = np.zeros(DIMS[i + 1])
    onehot = np.eye(CLASSES)[y]
    m = {k: 0.0 for k in params}
    v = {k: 0.0 for k in params}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n = len(y)
    n_layers = len(DIMS) - 1
    for step in range(1, epochs + 1):
        hs = [X]
        for i in range(n_layers):
            z = hs[-1] @ params[f"w{i}"].T + params[f"b{i}"]
            hs.append(np.maximum(z, 0.0) if i < n_layers - 1 else z)
        logits = hs[-1]
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        grads = {}
        for i in reversed(range(n_layers)):
            grads[f"w{i}"] = g.T @ hs[i]
            grads[f"b{i}"] = g.sum(axis=0)
            if i > 0:
                g = g @ params[f"w{i}"]
                g[hs[i] <= 0] = 0.0
        for k in params:
            m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
            v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
            mhat = m[k] / (1 - beta1**step)
            vhat = v[k] / (1 - beta2**step)
            params[k] -= lr * mhat / (np.sqrt(vhat) + eps)
    return params


def accuracy(params, X, y):
    h = X
    n_layers = len(DIMS) - 1
    for i in range(n_layers):
        z = h @ params[f"w{i}"].T + params[f"b{i}"]
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z
    return float(np.mean(h.argmax(axis=1) == y))


def main():
    rng = np.random.default_rng(SEED)
    X, y = make_blobs(rng, (N_TRAIN + N_CALIB + N_TEST) // CLASSES)
    X_train, y_train = X[:N_TRAIN], y[:N_TRAIN]
    X_calib, y_calib = X[N_TRAIN : N_TRAIN + N_CALIB], y[N_TRAIN : N_TRAIN + N_CALIB]
    X_test, y_test = X[N_TRAIN + N_CALIB :][:N_TEST], y[N_TRAIN + N_CALIB :][:N_TEST]

    params = train_mlp(rng, X_train, y_train)
    print(f"train acc {accuracy(params, X_train, y_train):.4f}")
    print(f"test  acc {accuracy(params, X_test, y_test):.4f}")

    n_layers = len(DIMS) - 1
    layers = [
        LayerSpec(
            name=f"fc{i}", kind="dense", in_dim=DIMS[i], out_dim=DIMS[i + 1],
            activation="relu" if i < n_layers - 1 else "softmax",
            backend=MultConfig("exact", 8), protection="none",
        )
        for i in range(n_layers)
    ]
    model = QuantizedNetwork(
        layers,
        [params[f"w{i}"] for i in range(n_layers)],
        [params[f"b{i}"] for i in range(n_layers)],
        input_bounds=profile_input_bounds(X_calib),
    )
    bounds = profile_ranges(model, X_calib)
    model.bounds = bounds
    print("bounds:", [(round(b.lower, 3), round(b.upper, 3)) for b in bounds])
    model.prepare()
    print(f"quantized test acc {model.score(X_test, y_test):.4f}")

    root = Path(__file__).resolve().parents[1] / "fixtures"
    save_model(root / "model", model)
    save_dataset(root / "data", "calib", X_calib, y_calib)
    save_dataset(root / "data", "test", X_test, y_test)
    print(f"fixtures written under {root}")


if __name__ == "__main__":
    main()
