"""Exact reverse-mode gradients and the finite-difference oracle.

The gradient factorizes through path weights: with upstream g = dL/dy,

    dL/dc_leaf = P_leaf(x) * g
    dL/dw_m    = (g . (y_left - y_right)) * a_m (1 - a_m) * P_m(x) * [x; 1]

for internal nodes that are not dropped; nodes with d_m = 1 and nodes
inside dropped subtrees get exactly zero gradient (their path weight is
zero or their gate does not influence the output). Drop indicators are
treated as constants: there is no gradient through the mask sampling.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from . import tree as _tree


@dataclass
class Gradients:
    """dL/dw per internal node and dL/dc per leaf, in node order."""

    gate_grads: np.ndarray
    leaf_grads: np.ndarray

    def __iadd__(self, other):
        self.gate_grads += other.gate_grads
        self.leaf_grads += other.leaf_grads
        return self

    def scaled(self, factor):
        return Gradients(self.gate_grads * factor, self.leaf_grads * factor)


def _drops_row(mask):
    return None if mask is None else mask.drops[None, :]


def backward(model, trace, x, upstream, mask=None):
    """Gradients of the loss at one example given its forward trace.

    trace must come from forward(model, x, mask); upstream is dL/dy at
    the root output.
    """
    cfg = model.config
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if trace.alphas.shape != (cfg.n_internal,) or trace.node_outputs.shape != (
        cfg.n_nodes,
        cfg.output_dim,
    ):
        raise ValueError("trace does not match the model shape")
    if upstream.shape != (cfg.output_dim,):
        raise ValueError(
            f"upstream has shape {upstream.shape}, expected ({cfg.output_dim},)"
        )

    coeff = _backend.mix_backward(
        np.ascontiguousarray(trace.alphas[None, :]),
        _drops_row(mask),
        np.ascontiguousarray(trace.node_outputs[None, :, :]),
        np.ascontiguousarray(trace.path_weights[None, :]),
        np.ascontiguousarray(upstream[None, :]),
    )[0]
    x_aug = _tree.augment(x[None, :])[0]
    gate_grads = coeff[:, None] * x_aug[None, :]
    leaf_pw = trace.path_weights[cfg.n_internal :]
    leaf_grads = leaf_pw[:, None] * upstream[None, :]
    return Gradients(gate_grads, leaf_grads)


def batch_gradients(model, btrace, X_aug, upstream, drops=None):
    """Mean gradient over a minibatch from its batched forward trace."""
    n = X_aug.shape[0]
    coeff = _backend.mix_backward(
        btrace.alphas, drops, btrace.node_outputs, btrace.path_weights,
        np.ascontiguousarray(upstream),
    )
    gate_grads = coeff.T @ X_aug / n
    leaf_pw = btrace.path_weights[:, model.config.n_internal :]
    leaf_grads = leaf_pw.T @ upstream / n
    return Gradients(gate_grads, leaf_grads)


def fd_gradient(model, x, target, loss_kind, mask=None, h=1e-5):
    """Central-difference gradient oracle.

    Perturbs every parameter by +-h with the same mask held fixed
    across both evaluations: (L(theta+h) - L(theta-h)) / (2h).
    """
    from . import optim  # imported lazily: optim depends on this module

    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")

    def loss_at(m):
        y, _ = _tree.forward(m, x, mask)
        value, _ = optim.loss(y, target, loss_kind)
        return value

    work = model.copy()
    gate_grads = np.empty_like(model.gate_w)
    for i in range(work.gate_w.shape[0]):
        for j in range(work.gate_w.shape[1]):
            orig = work.gate_w[i, j]
            work.gate_w[i, j] = orig + h
            up = loss_at(work)
            work.gate_w[i, j] = orig - h
            down = loss_at(work)
            work.gate_w[i, j] = orig
            gate_grads[i, j] = (up - down) / (2.0 * h)

    leaf_grads = np.empty_like(model.leaf_values)
    for i in range(work.leaf_values.shape[0]):
        for j in range(work.leaf_values.shape[1]):
            orig = work.leaf_values[i, j]
            work.leaf_values[i, j] = orig + h
            up = loss_at(work)
            work.leaf_values[i, j] = orig - h
            down = loss_at(work)
            work.leaf_values[i, j] = orig
            leaf_grads[i, j] = (up - down) / (2.0 * h)
    return Gradients(gate_grads, leaf_grads)


def relative_error(a, b):
    """|a - b| / max(1, |a|, |b|), elementwise."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def gradcheck(n_instances=100, h=1e-5, seed=0, max_depth=5, max_input_dim=8,
              max_output_dim=4):
    """Max relative error of backward vs. fd_gradient over random instances.

    Instances cycle through both loss kinds, masked and unmasked, with
    random shapes up to the given limits. Returns the max elementwise
    relative error observed.
    """
    from . import dropout, optim

    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for k in range(n_instances):
        depth = int(rng.integers(1, max_depth + 1))
        input_dim = int(rng.integers(1, max_input_dim + 1))
        classification = k % 2 == 1
        if classification:
            output_dim = int(rng.integers(2, max_output_dim + 1))
            task = _tree.TaskKind.CLASSIFICATION
            kind = optim.LossKind.SOFTMAX_CROSS_ENTROPY
        else:
            output_dim = int(rng.integers(1, max_output_dim + 1))
            task = _tree.TaskKind.REGRESSION
            kind = optim.LossKind.SQUARED_ERROR
        cfg = _tree.ModelConfig(depth, input_dim, output_dim, task)
        model = _tree.init_model(cfg, int(rng.integers(0, 2**31)))
        # moderate scales so gates are neither uniform nor saturated
        model.gate_w[:] = rng.normal(0.0, 1.0, model.gate_w.shape)
        model.leaf_values[:] = rng.normal(0.0, 1.0, model.leaf_values.shape)
        x = rng.normal(0.0, 1.0, input_dim)
        if classification:
            target = int(rng.integers(0, output_dim))
        else:
            target = rng.normal(0.0, 1.0, output_dim)
        mask = None
        if k % 3 != 0:
            mask = dropout.sample_mask(cfg, float(rng.uniform(0.1, 0.7)), rng)

        y, trace = _tree.forward(model, x, mask)
        _, upstream = optim.loss(y, target, kind)
        exact = backward(model, trace, x, upstream, mask)
        approx = fd_gradient(model, x, target, kind, mask, h)
        err = max(
            float(relative_error(exact.gate_grads, approx.gate_grads).max()),
            float(relative_error(exact.leaf_grads, approx.leaf_grads).max()),
        )
        worst = max(worst, err)
    return worst
