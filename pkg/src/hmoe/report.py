"""Model introspection: node visualizations, PGM export, smoothness.

A node's visualization is the path-weight-weighted average of the
inputs it is responsible for: mean_input(m) = sum_i P_m(x_i) x_i /
sum_i P_m(x_i) with unmasked path weights. The root's path weight is 1
everywhere, so its mean_input is the plain dataset mean.
"""

from dataclasses import dataclass

import numpy as np

from . import tree as _tree

# nodes whose total responsibility falls below this are excluded from
# image export (avoids 0/0 averages)
INACTIVE_THRESHOLD = 1e-9


@dataclass
class NodeImage:
    """Responsibility-weighted mean input of one node.

    node is the 1-based heap index; mean_input is None for inactive
    nodes (weight_total below the activity threshold).
    """

    node: int
    weight_total: float
    mean_input: np.ndarray | None

    @property
    def active(self):
        return self.mean_input is not None


def node_visualizations(model, dataset):
    """Weighted mean input per node over a dataset, in node order."""
    if dataset.n_examples == 0:
        raise ValueError("cannot visualize over an empty dataset")
    if dataset.input_dim != model.config.input_dim:
        raise ValueError(
            f"dataset input_dim {dataset.input_dim} does not match model "
            f"input_dim {model.config.input_dim}"
        )
    nn = model.config.n_nodes
    totals = np.zeros(nn)
    sums = np.zeros((nn, model.config.input_dim))
    chunk = max(16, 8_000_000 // max(nn, 1))
    for start in range(0, dataset.n_examples, chunk):
        X = dataset.features[start : start + chunk]
        _, btrace = _tree.forward_batch(model, X)
        totals += btrace.path_weights.sum(axis=0)
        sums += btrace.path_weights.T @ X
    images = []
    for i in range(nn):
        if totals[i] < INACTIVE_THRESHOLD:
            images.append(NodeImage(i + 1, float(totals[i]), None))
        else:
            images.append(NodeImage(i + 1, float(totals[i]), sums[i] / totals[i]))
    return images


def export_pgm(image, width, height, path):
    """Write a NodeImage as a binary PGM (P5), rescaled to [0, 255].

    The vector is laid out row-major as height x width. A constant
    vector (degenerate range) maps to mid-gray 128.
    """
    if image.mean_input is None:
        raise ValueError(f"node {image.node} is inactive, nothing to export")
    v = np.asarray(image.mean_input, dtype=np.float64)
    if width * height != v.size:
        raise ValueError(
            f"{width}x{height} does not match vector length {v.size}"
        )
    lo = float(v.min())
    hi = float(v.max())
    if hi > lo:
        scaled = np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.full(v.size, 128, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(scaled.tobytes())
    return path


def read_pgm(path):
    """Parse a binary PGM written by export_pgm: (width, height, bytes)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height = (int(tok) for tok in parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"{path}: unsupported maxval {parts[2]!r}")
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, got {pixels.size}")
    return width, height, pixels


def grid_predictions(model, grid):
    """Unmasked predictions of a scalar-input scalar-output model."""
    cfg = model.config
    if cfg.input_dim != 1 or cfg.output_dim != 1:
        raise ValueError("expected a scalar-input, scalar-output model")
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    Y, _ = _tree.forward_batch(model, grid[:, None])
    return Y[:, 0]


def total_variation(model, grid):
    """Sum of absolute successive prediction differences over a grid.

    The grid must be sorted ascending. Constant predictions give 0 and
    monotone predictions telescope to |y_last - y_first|.
    """
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size >= 2 and np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted ascending")
    y = grid_predictions(model, grid)
    return float(np.abs(np.diff(y)).sum())


def write_prediction_csv(model, grid, path):
    """Export grid predictions as x,y_pred rows for external plotting."""
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    y = grid_predictions(model, grid)
    with open(path, "w") as fh:
        fh.write("x,y_pred\n")
        for xv, yv in zip(grid, y):
            fh.write(f"{xv:.17g},{yv:.17g}\n")
