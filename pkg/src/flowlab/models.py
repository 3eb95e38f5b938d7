"""Smooth parametrized model families, their flattened outputs and exact Jacobians.

Parameter layout: layers in input-to-output order; within a layer the weight
matrix ``W`` (shape ``fan_out x fan_in``) row-major, then the bias ``b``. A
layer maps ``h -> W h + b``; every layer but the last is followed by the
activation.

Flattened outputs stack samples first: index ``n * Q + q`` holds output ``q``
of sample ``n`` (zero-based), and Jacobian rows follow the same order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dual import Dual

ACTIVATIONS = ("tanh", "softplus", "smoothed_relu")
LABEL_KINDS = ("regression", "simplex")


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    output_dim: int
    hidden_widths: tuple = ()
    activation: str = "tanh"
    beta: float = 10.0  # sharpness of smoothed_relu; ignored otherwise

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def layer_shapes(self) -> list:
        """(fan_in, fan_out) per layer."""
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def param_count(self) -> int:
        return sum((fi + 1) * fo for fi, fo in self.layer_shapes)


@dataclass(frozen=True)
class Dataset:
    """Training inputs (``N x M``), labels (``N x Q``) and optional class indices."""

    inputs: np.ndarray
    labels: np.ndarray
    label_kind: str = "regression"
    classes: Optional[tuple] = None

    def __post_init__(self):
        x = np.array(self.inputs, dtype=np.float64, ndmin=2)
        y = np.array(self.labels, dtype=np.float64, ndmin=2)
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("inputs and labels must be 2-D (one row per sample)")
        if x.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} inputs but {y.shape[0]} labels")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        if self.label_kind not in LABEL_KINDS:
            raise ValueError(f"label_kind must be one of {LABEL_KINDS}, got {self.label_kind!r}")
        if self.label_kind == "simplex":
            if np.any(y < 0):
                n, q = np.argwhere(y < 0)[0]
                raise ValueError(f"simplex label {n} has negative component {q}: {y[n, q]}")
            sums = y.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-12)
            if bad.size:
                raise ValueError(f"simplex label {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        if self.classes is not None:
            cls = tuple(int(c) for c in self.classes)
            if len(cls) != x.shape[0]:
                raise ValueError(f"{len(cls)} class indices for {x.shape[0]} samples")
            object.__setattr__(self, "classes", cls)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.labels.shape[1]

    @property
    def strictly_positive(self) -> bool:
        """Whether every label component is > 0 (needed for finite cross-entropy minima)."""
        return bool(np.all(self.labels > 0))

    def to_dict(self) -> dict:
        d = {"inputs": self.inputs.tolist(), "labels": self.labels.tolist(),
             "label_kind": self.label_kind}
        if self.classes is not None:
            d["classes"] = list(self.classes)
        return d


def dataset_from_dict(d: dict) -> Dataset:
    unknown = set(d) - {"inputs", "labels", "label_kind", "classes"}
    if unknown:
        raise ValueError(f"unknown dataset keys: {sorted(unknown)}")
    return Dataset(inputs=d["inputs"], labels=d["labels"],
                   label_kind=d.get("label_kind", "regression"), classes=d.get("classes"))


def load_dataset(path) -> Dataset:
    return dataset_from_dict(json.loads(Path(path).read_text()))


# -- activations ---------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _activate(spec: ModelSpec, h):
    z = h.primal if isinstance(h, Dual) else h
    if spec.activation == "tanh":
        val = np.tanh(z)
        slope = 1.0 - val * val
    elif spec.activation == "softplus":
        val = np.logaddexp(0.0, z)
        slope = _sigmoid(z)
    else:  # smoothed_relu: softplus(beta z) / beta
        b = spec.beta
        val = np.logaddexp(0.0, b * z) / b
        slope = _sigmoid(b * z)
    return h.apply(val, slope) if isinstance(h, Dual) else val


# -- evaluation ----------------------------------------------------------------

def _check_theta(spec: ModelSpec, theta) -> None:
    size = theta.shape[0] if isinstance(theta, Dual) else np.shape(theta)[0]
    if size != spec.param_count:
        raise ValueError(f"theta has length {size}, model expects K={spec.param_count}")


def unpack(spec: ModelSpec, theta):
    """Split ``theta`` into ``[(W, b), ...]`` following the documented layout."""
    _check_theta(spec, theta)
    layers, pos = [], 0
    for fi, fo in spec.layer_shapes:
        w = theta[pos:pos + fi * fo].reshape(fo, fi)
        pos += fi * fo
        b = theta[pos:pos + fo]
        pos += fo
        layers.append((w, b))
    return layers


def pack(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(w), np.ravel(b)]) for w, b in layers])


def _network(spec: ModelSpec, theta, x):
    h = x
    layers = unpack(spec, theta)
    for i, (w, b) in enumerate(layers):
        h = h @ w.T + b
        if i < len(layers) - 1:
            h = _activate(spec, h)
    return h


def _as_inputs(spec: ModelSpec, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"input has dimension {x.shape[-1]}, model expects M={spec.input_dim}")
    return x


def forward(spec: ModelSpec, theta, inputs) -> np.ndarray:
    """Evaluate the network on one input (shape ``(M,)``) or a batch (``(N, M)``)."""
    theta = np.asarray(theta, dtype=np.float64)
    x = _as_inputs(spec, inputs)
    single = x.ndim == 1
    out = _network(spec, theta, np.atleast_2d(x))
    return out[0] if single else out


def _check_dataset(spec: ModelSpec, data: Dataset) -> None:
    if data.input_dim != spec.input_dim:
        raise ValueError(f"dataset inputs have dimension {data.input_dim}, model expects M={spec.input_dim}")
    if data.output_dim != spec.output_dim:
        raise ValueError(f"dataset labels have dimension {data.output_dim}, model expects Q={spec.output_dim}")


def output_flatten(spec: ModelSpec, theta, data: Dataset) -> np.ndarray:
    _check_dataset(spec, data)
    return forward(spec, theta, data.inputs).reshape(-1)


def unflatten(x_flat, output_dim: int) -> np.ndarray:
    """Inverse of the flattening: ``(QN,) -> (N, Q)``."""
    x = np.asarray(x_flat, dtype=np.float64)
    if x.size % output_dim:
        raise ValueError(f"length {x.size} is not a multiple of Q={output_dim}")
    return x.reshape(-1, output_dim)


def label_flatten(data: Dataset) -> np.ndarray:
    return data.labels.reshape(-1).copy()


def forward_with_jacobian(spec: ModelSpec, theta, data: Dataset):
    """Return ``(x_flat, D)`` from a single batched forward-mode pass."""
    _check_dataset(spec, data)
    theta = np.asarray(theta, dtype=np.float64)
    _check_theta(spec, theta)
    out = _network(spec, Dual.seed(theta), data.inputs)
    # tangent is (K, N, Q); rows of D are (n, q) pairs in sample-major order
    d = out.tangent.reshape(spec.param_count, -1).T
    return out.primal.reshape(-1), np.ascontiguousarray(d)


def jacobian(spec: ModelSpec, theta, data: Dataset) -> np.ndarray:
    """Exact Jacobian ``D[theta]`` of the flattened outputs, shape ``(QN, K)``."""
    return forward_with_jacobian(spec, theta, data)[1]


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Uniform(-r, r) initialization with ``r = 1/sqrt(fan_in)`` per layer."""
    rng = np.random.default_rng(seed)
    layers = []
    for fi, fo in spec.layer_shapes:
        r = 1.0 / math.sqrt(fi)
        layers.append((rng.uniform(-r, r, size=(fo, fi)), rng.uniform(-r, r, size=fo)))
    return pack(layers)


def overparametrized_widths(input_dim: int, output_dim: int, n_samples: int,
                            depth: int = 1, min_width: int = 1) -> tuple:
    """Smallest equal hidden widths (``depth`` layers) giving ``K >= Q N``."""
    target = output_dim * n_samples
    width = max(1, min_width)
    while True:
        spec = ModelSpec(input_dim, output_dim, (width,) * depth)
        if spec.param_count >= target:
            return spec.hidden_widths
        width += 1
