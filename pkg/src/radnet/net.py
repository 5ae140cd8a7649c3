"""Single-hidden-layer tanh network: y = B2 + W2 tanh(B1 + W1 x).

Weights, Kaiming-uniform initialization, forward/backward passes and the
portable little-endian weight file (.rnnw). Training runs in float64;
files store float32; batched inference runs in float32.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import ModelKey, N_OUTPUTS

MAGIC = b"RNNW"
FORMAT_VERSION = 1


class WeightFileError(Exception):
    """Raised for malformed weight files; message names the failure class."""


@dataclass
class MlpWeights:
    W1: np.ndarray  # (k, n)
    B1: np.ndarray  # (k,)
    W2: np.ndarray  # (m, k)
    B2: np.ndarray  # (m,)

    @property
    def n(self) -> int:
        return self.W1.shape[1]

    @property
    def k(self) -> int:
        return self.W1.shape[0]

    @property
    def m(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "MlpWeights":
        return MlpWeights(self.W1.copy(), self.B1.copy(),
                          self.W2.copy(), self.B2.copy())

    def check(self):
        if self.W1.shape != (self.k, self.n) or self.B1.shape != (self.k,) \
                or self.W2.shape != (self.m, self.k) or self.B2.shape != (self.m,):
            raise ValueError("inconsistent weight shapes")
        for a in (self.W1, self.B1, self.W2, self.B2):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite weight entries")


@dataclass
class NormStats:
    """Per-dimension normalization statistics (population std, floored)."""

    feat_mean: np.ndarray
    feat_std: np.ndarray
    targ_mean: np.ndarray
    targ_std: np.ndarray

    def normalize_features(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feat_mean) / self.feat_std

    def normalize_targets(self, y: np.ndarray) -> np.ndarray:
        return (y - self.targ_mean) / self.targ_std

    def denormalize_targets(self, y: np.ndarray) -> np.ndarray:
        return y * self.targ_std + self.targ_mean


@dataclass
class MlpModel:
    """One sub-model: weights plus the normalization it was trained with."""

    key: ModelKey
    weights: MlpWeights
    norm: NormStats
    meta: dict = field(default_factory=dict)  # epochs, final NRMSE, seed, lineage


def init_kaiming(n: int, k: int, m: int, seed: int) -> MlpWeights:
    """Kaiming-uniform weights U(+-sqrt(6/fan_in)), zero biases."""
    if min(n, k, m) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    bound1 = np.sqrt(6.0 / n)
    bound2 = np.sqrt(6.0 / k)
    return MlpWeights(
        W1=rng.uniform(-bound1, bound1, (k, n)),
        B1=np.zeros(k),
        W2=rng.uniform(-bound2, bound2, (m, k)),
        B2=np.zeros(m),
    )


def forward(w: MlpWeights, x: np.ndarray) -> np.ndarray:
    """Single-vector forward pass (normalized in, normalized out)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (w.n,):
        raise ValueError(f"input length {x.shape} does not match n={w.n}")
    h = np.tanh(w.B1 + w.W1 @ x)
    return w.B2 + w.W2 @ h


def forward_batch(w: MlpWeights, X: np.ndarray, float32: bool = True) -> np.ndarray:
    """Batched forward pass over rows of X; float32 arithmetic by default."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != w.n:
        raise ValueError(f"batch shape {X.shape} does not match n={w.n}")
    dt = np.float32 if float32 else np.float64
    W1 = w.W1.astype(dt, copy=False)
    W2 = w.W2.astype(dt, copy=False)
    H = np.tanh(X.astype(dt, copy=False) @ W1.T + w.B1.astype(dt, copy=False))
    return H @ W2.T + w.B2.astype(dt, copy=False)


def backward(w: MlpWeights, x: np.ndarray, y_true: np.ndarray):
    """Loss (1/m) * sum((y - y_true)^2) and its analytic gradients.

    Returns (grads: MlpWeights-shaped arrays, loss).
    """
    x = np.asarray(x, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if x.shape != (w.n,) or y_true.shape != (w.m,):
        raise ValueError("shape mismatch in backward")
    a = w.B1 + w.W1 @ x
    h = np.tanh(a)
    y = w.B2 + w.W2 @ h
    r = y - y_true
    loss = float(np.mean(r ** 2))

    dy = 2.0 * r / w.m
    gW2 = np.outer(dy, h)
    gB2 = dy
    dh = w.W2.T @ dy
    da = dh * (1.0 - h ** 2)
    gW1 = np.outer(da, x)
    gB1 = da
    return MlpWeights(gW1, gB1, gW2, gB2), loss


def backward_batch(w: MlpWeights, X: np.ndarray, Y_true: np.ndarray):
    """Mean-over-batch loss and gradients; float64, used by the trainer."""
    B = X.shape[0]
    A = X @ w.W1.T + w.B1
    H = np.tanh(A)
    Y = H @ w.W2.T + w.B2
    R = Y - Y_true
    loss = float(np.mean(R ** 2))

    dY = 2.0 * R / (w.m * B)
    gW2 = dY.T @ H
    gB2 = dY.sum(axis=0)
    dH = dY @ w.W2
    dA = dH * (1.0 - H ** 2)
    gW1 = dA.T @ X
    gB1 = dA.sum(axis=0)
    return MlpWeights(gW1, gB1, gW2, gB2), loss


# ---------------------------------------------------------------------------
# weight file (.rnnw)

def _f32_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def save_weights(model: MlpModel, path):
    """Write the .rnnw weight file; a .meta.json sidecar carries the meta dict."""
    w = model.weights
    w.check()
    if w.m != N_OUTPUTS:
        raise ValueError(f"model output width {w.m} != {N_OUTPUTS}")
    if w.n != model.key.n_features:
        raise ValueError(
            f"model width {w.n} does not match key {model.key.code}")

    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", FORMAT_VERSION)
    body += model.key.code.encode("ascii")
    body += struct.pack("<III", w.n, w.k, w.m)
    for arr in (model.norm.feat_mean, model.norm.feat_std,
                model.norm.targ_mean, model.norm.targ_std,
                w.W1, w.B1, w.W2, w.B2):
        body += _f32_bytes(arr)
    body += struct.pack("<I", zlib.crc32(bytes(body)))

    path = Path(path)
    path.write_bytes(bytes(body))
    if model.meta:
        path.with_suffix(".meta.json").write_text(json.dumps(model.meta, indent=2))


def load_weights(path) -> MlpModel:
    """Read a .rnnw file; raises WeightFileError naming the failure kind."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise WeightFileError(f"bad magic in {path.name}")
    if len(raw) < 19:
        raise WeightFileError(f"truncation: header incomplete in {path.name}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise WeightFileError(f"version mismatch: {version} in {path.name}")
    n, k, m = struct.unpack_from("<III", raw, 11)
    counts = [n, n, m, m, k * n, k, m * k, m]
    payload_len = 4 * sum(counts)
    expected = 23 + payload_len + 4
    if len(raw) < expected:
        raise WeightFileError(f"truncation: file shorter than header implies "
                              f"({len(raw)} < {expected} bytes)")
    if len(raw) > expected:
        raise WeightFileError(f"trailing bytes after CRC in {path.name}")

    (crc_stored,) = struct.unpack_from("<I", raw, expected - 4)
    if zlib.crc32(raw[:expected - 4]) != crc_stored:
        raise WeightFileError(f"checksum failure in {path.name}")

    code = raw[8:11].decode("ascii", errors="replace")
    try:
        key = ModelKey.from_code(code)
    except ValueError as e:
        raise WeightFileError(str(e)) from None
    if n != key.n_features:
        raise WeightFileError(
            f"dimension error: n={n} inconsistent with key {key.code}")
    if m != N_OUTPUTS:
        raise WeightFileError(f"dimension error: m={m} != {N_OUTPUTS}")

    arrays = []
    off = 23
    for c in counts:
        arrays.append(np.frombuffer(raw, dtype="<f4", count=c, offset=off).astype(float))
        off += 4 * c
    feat_mean, feat_std, targ_mean, targ_std, W1, B1, W2, B2 = arrays
    weights = MlpWeights(W1.reshape(k, n), B1, W2.reshape(m, k), B2)
    norm = NormStats(feat_mean, feat_std, targ_mean, targ_std)

    meta = {}
    sidecar = path.with_suffix(".meta.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return MlpModel(key=key, weights=weights, norm=norm, meta=meta)
