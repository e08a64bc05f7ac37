"""Subtree dropout: mask sampling and expectation over masks.

Each internal node independently drops its left subtree with
probability p during training (the node then outputs its right child's
output alone). Test-time prediction uses no mask and no rescaling by
1 - p: the effective child weights form a convex pair either way, so
leaf path weights always sum to 1.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import tree as _tree

_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass
class DropoutMask:
    """Realized drop indicators for one presentation.

    drops[m - 1] = 1 means internal node m drops its left subtree.
    rate records the Bernoulli parameter the mask was drawn with.
    """

    drops: np.ndarray
    rate: float


def _check_rate(p):
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout rate must be in [0, 1], got {p}")
    return p


def sample_mask(config, p, rng):
    """Draw one mask: per internal node, drop with probability p.

    rng is a numpy Generator; the draw consumes exactly n_internal
    uniforms in node order.
    """
    p = _check_rate(p)
    drops = (rng.random(config.n_internal) < p).astype(np.uint8)
    return DropoutMask(drops, p)


def epoch_mask_matrix(n_rows, n_internal, p, seed, epoch):
    """Counter-based mask block for one epoch, shape (n_rows, n_internal).

    Row i column m-1 is the drop indicator of node m for presentation i
    (example index or minibatch index depending on granularity). Keyed
    by (seed, epoch) through a Philox counter stream, so masks are
    reproducible regardless of batch order or worker scheduling.
    """
    p = _check_rate(p)
    key = np.array([np.uint64(seed) & _U64, np.uint64(epoch) & _U64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random((n_rows, n_internal))
    return (u < p).astype(np.uint8)


def expected_output(model, x, p):
    """Closed-form expectation of the masked forward output over masks.

    Uses the per-node factorization (drop indicators are independent):

        E[y_m] = (1-p) * a_m * E[y_left] + ((1-p) * (1-a_m) + p) * E[y_right]

    with E[y_leaf] = leaf value. p=0 reproduces the plain forward
    output exactly and p=1 the rightmost leaf.
    """
    p = _check_rate(p)
    cfg = model.config
    x = np.asarray(x, dtype=np.float64)
    alphas = _tree.gate_activations(model, _tree.augment(x[None, :]))[0]

    ey = np.empty((cfg.n_nodes, cfg.output_dim))
    ey[cfg.n_internal :] = model.leaf_values
    for i in range(cfg.n_internal - 1, -1, -1):
        a = alphas[i]
        wl = (1.0 - p) * a
        wr = (1.0 - p) * (1.0 - a) + p
        ey[i] = wl * ey[2 * i + 1] + wr * ey[2 * i + 2]
    return ey[0].copy()


def enumerate_expected_output(model, x, p):
    """Exhaustive-enumeration oracle for expected_output.

    Sums P(mask) * forward(model, x, mask) over all 2**n_internal
    masks. Only feasible for small trees; rejects n_internal > 16.
    """
    p = _check_rate(p)
    cfg = model.config
    ni = cfg.n_internal
    if ni > 16:
        raise ValueError(f"enumeration over 2**{ni} masks is not feasible")
    total = np.zeros(cfg.output_dim)
    for bits in itertools.product((0, 1), repeat=ni):
        drops = np.array(bits, dtype=np.uint8)
        k = int(drops.sum())
        weight = (p**k) * ((1.0 - p) ** (ni - k))
        if weight == 0.0:
            continue
        y, _ = _tree.forward(model, x, DropoutMask(drops, p))
        total += weight * y
    return total
