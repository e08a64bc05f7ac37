"""Pure-numpy tree mixing kernels (fallback backend).

Node arrays use heap order: node id m (1-based, root = 1) lives at row
index m - 1, so the children of index i are 2i+1 and 2i+2. For a tree
with ``ni`` internal nodes there are ``2*ni + 1`` nodes total and the
leaves occupy indices ni .. 2*ni.

The compiled backend in ``_kernels.pyx`` implements the same three
functions with identical per-element arithmetic (same operation order,
FMA contraction disabled), so either backend can serve the contracts.
"""

import numpy as np

BACKEND_NAME = "numpy"


def _levels(depth):
    # index ranges [2^l - 1, 2^(l+1) - 1) for heap level l
    return [((1 << l) - 1, (1 << (l + 1)) - 1) for l in range(depth)]


def mix_forward(alphas, drops, leaves):
    """Bottom-up subtree outputs and top-down path weights.

    alphas: (B, ni) gate activations, drops: (B, ni) uint8 or None,
    leaves: (nl, o) leaf value vectors with nl = ni + 1.
    Returns (node_outputs (B, nn, o), path_weights (B, nn)), nn = 2*ni+1.
    A dropped node emits its right child's output unchanged; its left
    child receives path weight 0 and its right child inherits the full
    parent weight.
    """
    B, ni = alphas.shape
    nl, o = leaves.shape
    nn = 2 * ni + 1
    depth = nl.bit_length() - 1

    out = np.empty((B, nn, o))
    out[:, ni:, :] = leaves
    for lo, hi in reversed(_levels(depth)):
        a = alphas[:, lo:hi, None]
        left = out[:, 2 * lo + 1 : 2 * hi : 2, :]
        right = out[:, 2 * lo + 2 : 2 * hi + 1 : 2, :]
        mixed = a * left + (1.0 - a) * right
        if drops is not None:
            d = drops[:, lo:hi, None].astype(bool)
            out[:, lo:hi, :] = np.where(d, right, mixed)
        else:
            out[:, lo:hi, :] = mixed

    pw = np.empty((B, nn))
    pw[:, 0] = 1.0
    for lo, hi in _levels(depth):
        a = alphas[:, lo:hi]
        p = pw[:, lo:hi]
        pl = p * a
        pr = p * (1.0 - a)
        if drops is not None:
            d = drops[:, lo:hi].astype(bool)
            pl = np.where(d, 0.0, pl)
            pr = np.where(d, p, pr)
        pw[:, 2 * lo + 1 : 2 * hi : 2] = pl
        pw[:, 2 * lo + 2 : 2 * hi + 1 : 2] = pr
    return out, pw


def mix_backward(alphas, drops, node_outputs, path_weights, upstream):
    """Per-node gate-logit coefficients for the batch.

    coeff[b, i] = (upstream[b] . (y_left - y_right)) * a(1-a) * P, zeroed
    where the node itself is dropped (path weight already zeroes nodes
    inside dropped subtrees). Gate weight gradients follow as
    coeff.T @ X_aug.
    """
    ni = alphas.shape[1]
    yl = node_outputs[:, 1::2, :]
    yr = node_outputs[:, 2::2, :]
    # accumulate over output components one at a time: the compiled
    # backend sums in this exact order, keeping the backends bit-equal
    d = np.zeros((alphas.shape[0], ni))
    for k in range(node_outputs.shape[2]):
        d += upstream[:, k, None] * (yl[:, :, k] - yr[:, :, k])
    coeff = d * alphas * (1.0 - alphas) * path_weights[:, :ni]
    if drops is not None:
        coeff = np.where(drops.astype(bool), 0.0, coeff)
    return coeff
