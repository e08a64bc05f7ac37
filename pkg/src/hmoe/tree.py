"""Binary soft tree model: parameters, forward semantics, checkpoints.

The tree is a complete binary tree of a fixed depth. Nodes are numbered
heap-style from 1: node m is internal iff m < 2**depth, and the children
of internal node m are 2m (left) and 2m+1 (right). Arrays are stored in
node order with node m at row m - 1; leaf j (0-based, left to right) is
node 2**depth + j.

Every internal node holds a gating weight vector of length input_dim + 1
(an implicit constant-1 feature is appended to the input so gates can
shift away from the origin). Every leaf holds a constant output vector.
The prediction is the gate-weighted mixture over all leaves:

    y_m(x) = alpha_m(x) * y_left(x) + (1 - alpha_m(x)) * y_right(x)
    alpha_m(x) = sigmoid(w_m . [x; 1])

An optional subtree-dropout mask replaces the mixture at dropped nodes
with the right child's output alone (the left subtree's responsibility
becomes exactly zero).
"""

import enum
import struct
from dataclasses import dataclass

import numpy as np

from . import _backend

CHECKPOINT_MAGIC = b"HMOE"
CHECKPOINT_VERSION = 1

# sigmoid outputs are clamped into the open interval (0, 1)
_ALPHA_LO = np.nextafter(0.0, 1.0)
_ALPHA_HI = np.nextafter(1.0, 0.0)


class TaskKind(enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


@dataclass(frozen=True)
class ModelConfig:
    """Tree shape and task description.

    depth counts gating levels: 2**depth - 1 internal nodes and
    2**depth leaves. input_dim excludes the bias feature. output_dim is
    1 for scalar regression and the class count for classification.
    """

    depth: int
    input_dim: int
    output_dim: int
    task: TaskKind

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.output_dim < 1:
            raise ValueError(f"output_dim must be >= 1, got {self.output_dim}")
        if not isinstance(self.task, TaskKind):
            raise ValueError(f"task must be a TaskKind, got {self.task!r}")

    @property
    def n_internal(self):
        return (1 << self.depth) - 1

    @property
    def n_leaves(self):
        return 1 << self.depth

    @property
    def n_nodes(self):
        return (1 << (self.depth + 1)) - 1


@dataclass
class TreeModel:
    """Parameter storage in heap node order.

    gate_w[m - 1] is the gating weight vector of internal node m
    (last entry is the bias); leaf_values[j] is the value vector of
    leaf node 2**depth + j.
    """

    config: ModelConfig
    gate_w: np.ndarray
    leaf_values: np.ndarray

    def gate_weight(self, node):
        if not 1 <= node <= self.config.n_internal:
            raise IndexError(f"node {node} is not internal")
        return self.gate_w[node - 1]

    def leaf_value(self, node):
        first = self.config.n_leaves
        if not first <= node <= self.config.n_nodes:
            raise IndexError(f"node {node} is not a leaf")
        return self.leaf_values[node - first]

    def copy(self):
        return TreeModel(self.config, self.gate_w.copy(), self.leaf_values.copy())


@dataclass
class GatingTrace:
    """Forward-pass record for one input.

    alphas[m-1] is the gate activation of internal node m,
    node_outputs[m-1] the subtree output y_m(x), and path_weights[m-1]
    the product of effective gate factors from the root down to node m
    (the node's responsibility; 1 at the root).
    """

    alphas: np.ndarray
    node_outputs: np.ndarray
    path_weights: np.ndarray


@dataclass
class BatchTrace:
    """Batched counterpart of GatingTrace, one row per example."""

    alphas: np.ndarray
    node_outputs: np.ndarray
    path_weights: np.ndarray

    def example(self, i):
        return GatingTrace(self.alphas[i], self.node_outputs[i], self.path_weights[i])


def init_model(config, seed):
    """Fresh model with all parameters i.i.d. uniform on [-0.01, 0.01].

    Deterministic in (config, seed): gate weights are drawn first in
    node order, then leaf values.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    gate_w = rng.uniform(-0.01, 0.01, size=(config.n_internal, config.input_dim + 1))
    leaf_values = rng.uniform(-0.01, 0.01, size=(config.n_leaves, config.output_dim))
    return TreeModel(config, gate_w, leaf_values)


def sigmoid(z):
    """Numerically stable elementwise sigmoid, clamped into (0, 1).

    Computed from exp(-|z|), which never overflows: 1/(1+e) for z >= 0
    and e/(1+e) for z < 0.
    """
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0, e) / (1.0 + e)
    return np.clip(out, _ALPHA_LO, _ALPHA_HI)


def augment(X):
    """Append the constant-1 bias feature to each row."""
    X = np.asarray(X, dtype=np.float64)
    Xa = np.empty((X.shape[0], X.shape[1] + 1))
    Xa[:, :-1] = X
    Xa[:, -1] = 1.0
    return Xa


def _check_input(config, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != config.input_dim:
        raise ValueError(
            f"input has shape {x.shape}, expected ({config.input_dim},)"
        )
    return x


def _check_drops(config, drops, n_rows):
    if drops is None:
        return None
    drops = np.ascontiguousarray(drops, dtype=np.uint8)
    if drops.shape != (n_rows, config.n_internal):
        raise ValueError(
            f"mask has shape {drops.shape}, expected ({n_rows}, {config.n_internal})"
        )
    return drops


def gate(model, node, x):
    """Gate activation sigmoid(w_m . [x; 1]) of internal node m at x."""
    x = _check_input(model.config, x)
    w = model.gate_weight(node)
    z = float(np.dot(w[:-1], x) + w[-1])
    return float(sigmoid(z))


def gate_activations(model, X_aug):
    """All gate activations for pre-augmented inputs, shape (B, n_internal)."""
    return sigmoid(X_aug @ model.gate_w.T)


def forward_batch(model, X, drops=None):
    """Forward pass over a batch of inputs.

    X: (B, input_dim); drops: optional (B, n_internal) uint8 drop
    indicators (1 = drop that node's left subtree). Absent mask is
    equivalent to an all-zeros mask. Returns (Y (B, output_dim),
    BatchTrace).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.config.input_dim:
        raise ValueError(
            f"input batch has shape {X.shape}, expected (B, {model.config.input_dim})"
        )
    drops = _check_drops(model.config, drops, X.shape[0])
    alphas = gate_activations(model, augment(X))
    leaves = np.ascontiguousarray(model.leaf_values, dtype=np.float64)
    node_outputs, path_weights = _backend.mix_forward(alphas, drops, leaves)
    trace = BatchTrace(alphas, node_outputs, path_weights)
    return node_outputs[:, 0, :].copy(), trace


def forward(model, x, mask=None):
    """Forward pass for a single input vector.

    mask is an optional DropoutMask covering every internal node.
    Returns (y (output_dim,), GatingTrace).
    """
    x = _check_input(model.config, x)
    drops = None if mask is None else mask.drops[None, :]
    Y, btrace = forward_batch(model, x[None, :], drops)
    return Y[0], btrace.example(0)


def leaf_path_weights(trace):
    """Path weights restricted to the leaves, in node order.

    For any mask the weights sum to 1 and the forward output equals
    sum_leaf weight * leaf_value.
    """
    n_nodes = trace.path_weights.shape[-1]
    n_internal = (n_nodes - 1) // 2
    return trace.path_weights[..., n_internal:]


_HEADER = struct.Struct("<4sIIIIB")
_TASK_CODE = {TaskKind.REGRESSION: 0, TaskKind.CLASSIFICATION: 1}
_TASK_FROM_CODE = {v: k for k, v in _TASK_CODE.items()}


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoint files."""


def save_checkpoint(model, path):
    """Write the model as a little-endian binary checkpoint."""
    cfg = model.config
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        cfg.depth,
        cfg.input_dim,
        cfg.output_dim,
        _TASK_CODE[cfg.task],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.gate_w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.leaf_values, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, depth, input_dim, output_dim, task_code = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if task_code not in _TASK_FROM_CODE:
        raise CheckpointError(f"{path}: unknown task code {task_code}")
    cfg = ModelConfig(depth, input_dim, output_dim, _TASK_FROM_CODE[task_code])
    n_gate = cfg.n_internal * (cfg.input_dim + 1)
    n_leaf = cfg.n_leaves * cfg.output_dim
    expect = _HEADER.size + 8 * (n_gate + n_leaf)
    if len(raw) != expect:
        raise CheckpointError(
            f"{path}: payload is {len(raw)} bytes, expected {expect}"
        )
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    gate_w = body[:n_gate].reshape(cfg.n_internal, cfg.input_dim + 1).astype(np.float64)
    leaf_values = body[n_gate:].reshape(cfg.n_leaves, cfg.output_dim).astype(np.float64)
    if not (np.isfinite(gate_w).all() and np.isfinite(leaf_values).all()):
        raise CheckpointError(f"{path}: non-finite parameters")
    return TreeModel(cfg, gate_w, leaf_values)
