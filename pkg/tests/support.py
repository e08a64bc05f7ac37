"""Shared test helpers: independent reference implementations and reporting.

The reference implementations here are deliberately naive (per-node
recursion, pure-Python scalar loops) so they cannot share bugs with the
vectorized library code they are used to check.
"""

import gzip
import math
import struct

import numpy as np

from hmoe.tree import _ALPHA_HI, _ALPHA_LO, ModelConfig, TaskKind, TreeModel

# One line per acceptance criterion, echoed into the terminal summary so
# the pass/fail record survives pytest's output capture.
_CRITERION_LINES = []


def record_criterion(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    _CRITERION_LINES.append(line)
    print(line)
    return ok


def record_criterion_skip(name: str, reason: str) -> None:
    line = f"[SKIP] {name}: {reason}"
    _CRITERION_LINES.append(line)
    print(line)


def ref_sigmoid(z: float) -> float:
    """Scalar logistic with the same open-interval clamp as the library."""
    if z >= 0:
        val = 1.0 / (1.0 + math.exp(-z))
    else:
        ez = math.exp(z)
        val = ez / (1.0 + ez)
    return min(max(val, _ALPHA_LO), _ALPHA_HI)


def ref_forward(model: TreeModel, x, drops=None):
    """Evaluate the tree by direct recursion over heap-numbered nodes.

    Node 1 is the root; node m has children 2m and 2m+1; nodes at the
    deepest level are leaves.  A dropped gate routes to its right child.
    """
    cfg = model.config
    first_leaf = 2 ** cfg.depth
    xa = np.append(np.asarray(x, dtype=np.float64), 1.0)

    def value(m):
        if m >= first_leaf:
            return model.leaf_values[m - first_leaf].copy()
        if drops is not None and drops[m - 1]:
            return value(2 * m + 1)
        a = ref_sigmoid(float(model.gate_w[m - 1] @ xa))
        return a * value(2 * m) + (1.0 - a) * value(2 * m + 1)

    return value(1)


def ref_path_weights(model: TreeModel, x, drops=None):
    """Per-node mixture weights by recursion: root 1, split a/(1-a)."""
    cfg = model.config
    first_leaf = 2 ** cfg.depth
    xa = np.append(np.asarray(x, dtype=np.float64), 1.0)
    weights = np.zeros(2 ** (cfg.depth + 1) - 1)

    def descend(m, w):
        weights[m - 1] = w
        if m >= first_leaf:
            return
        if drops is not None and drops[m - 1]:
            descend(2 * m, 0.0)
            descend(2 * m + 1, w)
            return
        a = ref_sigmoid(float(model.gate_w[m - 1] @ xa))
        descend(2 * m, w * a)
        descend(2 * m + 1, w * (1.0 - a))

    descend(1, 1.0)
    return weights


def ref_adam_step(params, grads, m, v, t, lr, beta1, beta2, eps):
    """Elementwise Adam update as explicit scalar loops."""
    out = params.copy()
    flat_p = out.reshape(-1)
    flat_g = np.asarray(grads, dtype=np.float64).reshape(-1)
    flat_m = m.reshape(-1)
    flat_v = v.reshape(-1)
    for i in range(flat_p.size):
        flat_m[i] = beta1 * flat_m[i] + (1.0 - beta1) * flat_g[i]
        flat_v[i] = beta2 * flat_v[i] + (1.0 - beta2) * flat_g[i] ** 2
        mhat = flat_m[i] / (1.0 - beta1**t)
        vhat = flat_v[i] / (1.0 - beta2**t)
        flat_p[i] = flat_p[i] - lr * mhat / (math.sqrt(vhat) + eps)
    return out


def random_model(rng, depth, input_dim, output_dim, task=TaskKind.REGRESSION,
                 scale=1.0) -> TreeModel:
    cfg = ModelConfig(depth=depth, input_dim=input_dim,
                      output_dim=output_dim, task=task)
    gate_w = rng.normal(0.0, scale, size=(cfg.n_internal, input_dim + 1))
    leaves = rng.normal(0.0, scale, size=(cfg.n_leaves, output_dim))
    return TreeModel(cfg, gate_w, leaves)


def idx_bytes(magic: int, arr: np.ndarray) -> bytes:
    """Serialize a uint8 array in the big-endian magic+dims+payload layout."""
    header = struct.pack(">I", magic)
    for d in arr.shape:
        header += struct.pack(">I", d)
    return header + arr.astype(np.uint8).tobytes()


def write_idx_pair(tmp_path, images, labels, gz=False):
    """Write a matching image/label file pair, optionally gzipped."""
    suffix = ".gz" if gz else ""
    img_path = tmp_path / f"imgs-idx3-ubyte{suffix}"
    lab_path = tmp_path / f"labs-idx1-ubyte{suffix}"
    img_raw = idx_bytes(0x00000803, images.astype(np.uint8))
    lab_raw = idx_bytes(0x00000801, labels.astype(np.uint8))
    if gz:
        img_path.write_bytes(gzip.compress(img_raw))
        lab_path.write_bytes(gzip.compress(lab_raw))
    else:
        img_path.write_bytes(img_raw)
        lab_path.write_bytes(lab_raw)
    return img_path, lab_path
