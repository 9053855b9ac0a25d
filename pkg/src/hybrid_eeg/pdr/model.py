"""Custom CNN regressor for the posterior dominant rhythm.

Layer-by-layer shapes for the default (6, 48, 1) input:

=========  ==========  ============
layer      output      parameters
=========  ==========  ============
conv1      6 x 48 x 64       640
pool1      3 x 24 x 64
conv2      3 x 24 x 128   73 856
pool2      2 x 12 x 128
conv3      2 x 12 x 256  295 168
pool3      1 x 6 x 256
conv4      1 x 6 x 512 1 180 160
conv5      1 x 6 x 512 2 359 808
flatten    3072
dense      64            196 672
dropout    64
output     1                  65
=========  ==========  ============

Convolutions are 3x3, stride 1, same padding, each followed by ReLU. Pools
are 2x2 / stride 2 with ceil output so the six electrode rows survive all
three (6 -> 3 -> 2 -> 1).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D, ReLU, Sigmoid

MAGIC = b"HEEGPDR\x00"
FORMAT_VERSION = 1

LABEL_MIN_HZ = 4.0
LABEL_MAX_HZ = 12.0


def normalize_label(hz):
    """Map a PDR in [4, 12] Hz onto [0, 1]."""
    arr = np.asarray(hz, dtype=np.float64)
    if np.any(arr < LABEL_MIN_HZ) or np.any(arr > LABEL_MAX_HZ):
        raise ValueError(f"PDR label outside [{LABEL_MIN_HZ}, {LABEL_MAX_HZ}] Hz: {hz}")
    out = (arr - 4.0) / 8.0
    return float(out) if out.ndim == 0 else out


def denormalize_label(unit):
    arr = np.asarray(unit, dtype=np.float64)
    out = 8.0 * arr + 4.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, int, int] = (6, 48, 1)
    filters: tuple[int, ...] = (64, 128, 256, 512, 512)
    pool_after: tuple[int, ...] = (0, 1, 2)
    kernel: int = 3
    dense_units: int = 64
    dropout: float = 0.2

    def as_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "filters": list(self.filters),
                "pool_after": list(self.pool_after), "kernel": self.kernel,
                "dense_units": self.dense_units, "dropout": self.dropout}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(tuple(d["input_shape"]), tuple(d["filters"]), tuple(d["pool_after"]),
                   d["kernel"], d["dense_units"], d["dropout"])


TINY = Architecture(filters=(2, 2, 2, 2, 2), dense_units=4)


@dataclass
class PdrModel:
    """Sequential CNN with a sigmoid output in (0, 1)."""

    architecture: Architecture
    layers: list[Layer]
    seed: int
    dtype: str = "float32"
    metadata: dict = field(default_factory=dict)

    @classmethod
    def build(cls, architecture: Architecture = Architecture(), seed: int = 0,
              dtype=np.float32) -> "PdrModel":
        rng = np.random.default_rng(seed)
        a = architecture
        layers: list[Layer] = []
        shape = a.input_shape
        in_ch = shape[2]
        for i, nf in enumerate(a.filters):
            conv = Conv2D(in_ch, nf, a.kernel, rng=rng, dtype=dtype)
            layers += [conv, ReLU()]
            shape = conv.output_shape(shape)
            if i in a.pool_after:
                pool = MaxPool2D()
                layers.append(pool)
                shape = pool.output_shape(shape)
            in_ch = nf
        flat = int(np.prod(shape))
        layers += [Flatten(), Dense(flat, a.dense_units, rng=rng, dtype=dtype), ReLU(),
                   Dropout(a.dropout, rng=np.random.default_rng([seed, 1])),
                   Dense(a.dense_units, 1, rng=rng, dtype=dtype, gain=3.0), Sigmoid()]
        return cls(a, layers, seed, np.dtype(dtype).name)

    # ------------------------------------------------------------ compute
    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x[:, 0]

    def backward(self, dout: np.ndarray) -> None:
        g = np.asarray(dout, dtype=self.dtype).reshape(-1, 1)
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def zero_grad(self) -> None:
        for layer in self.layers:
            for g in layer.grads.values():
                g[...] = 0

    def parameters(self):
        """Yield ``(name, param, grad)`` for every trainable array."""
        for i, layer in enumerate(self.layers):
            for k, p in layer.params.items():
                yield f"{i}.{type(layer).__name__}.{k}", p, layer.grads[k]

    def n_parameters(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def predict_unit(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=self.dtype)

    def predict_hz(self, x: np.ndarray) -> np.ndarray:
        return denormalize_label(self.predict_unit(x).astype(np.float64))

    def copy_weights(self) -> list[np.ndarray]:
        return [p.copy() for _, p, _ in self.parameters()]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        for (_, p, _), w in zip(self.parameters(), weights):
            p[...] = w

    # -------------------------------------------------------- persistence
    def save(self, path: str | Path) -> None:
        manifest = [{"name": n, "shape": list(p.shape)} for n, p, _ in self.parameters()]
        header = json.dumps({
            "architecture": self.architecture.as_dict(),
            "seed": self.seed,
            "dtype": self.dtype,
            "params": manifest,
            "metadata": self.metadata,
        }, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
            fh.write(header)
            for _, p, _ in self.parameters():
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "PdrModel":
        buf = Path(path).read_bytes()
        if buf[:8] != MAGIC:
            raise ValueError(f"{path}: not a PDR model file")
        version, hlen = struct.unpack("<II", buf[8:16])
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format version {version}")
        header = json.loads(buf[16:16 + hlen].decode("utf-8"))
        model = cls.build(Architecture.from_dict(header["architecture"]), header["seed"],
                          np.dtype(header["dtype"]))
        model.metadata = header.get("metadata", {})
        pos = 16 + hlen
        for (name, p, _), spec in zip(model.parameters(), header["params"]):
            if list(p.shape) != spec["shape"]:
                raise ValueError(f"{path}: shape mismatch for {name}")
            n = p.size * 4
            p[...] = np.frombuffer(buf[pos:pos + n], dtype="<f4").reshape(p.shape)
            pos += n
        if pos != len(buf):
            raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
        return model


def predict(model: PdrModel, feature_map) -> float:
    """PDR in Hz for one feature map."""
    values = getattr(feature_map, "values", feature_map)
    return float(model.predict_hz(np.asarray(values))[0])


def ensemble_predict(models: list[PdrModel], feature_map) -> float:
    """Arithmetic mean of member predictions."""
    if not models:
        raise ValueError("ensemble has no members")
    return float(np.mean([predict(m, feature_map) for m in models]))
