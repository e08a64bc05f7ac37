"""Losses, Adam, and the minibatched training driver.

Squared loss for regression, softmax cross-entropy for classification,
no other regularizer. The minibatch gradient is the mean over the
batch, so the learning rate keeps its meaning across batch sizes.

Training runs every epoch to completion: the best-validation model is
tracked and reported alongside the final model, but never stops the
run early. Training loss/error are accumulated online during the epoch
with dropout masks active; validation and test errors are measured on
the unmasked model after each epoch.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import dropout as _dropout
from . import grad as _grad
from . import tree as _tree
from .tree import TaskKind


class LossKind(enum.Enum):
    SQUARED_ERROR = "squared_error"
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"


def loss_for_task(task):
    if task is TaskKind.REGRESSION:
        return LossKind.SQUARED_ERROR
    return LossKind.SOFTMAX_CROSS_ENTROPY


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss is encountered during training."""


def _softmax(Y):
    # max subtraction for stability
    shifted = Y - Y.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_class_targets(targets, output_dim):
    targets = np.asarray(targets)
    if targets.ndim != 1:
        raise ValueError(f"class targets must be 1-D, got shape {targets.shape}")
    t = targets.astype(np.int64)
    if t.size and (t.min() < 0 or t.max() >= output_dim):
        raise ValueError(
            f"class index out of range [0, {output_dim}): "
            f"min {t.min()}, max {t.max()}"
        )
    return t


def loss_batch(Y, targets, kind):
    """Per-example loss values and upstream gradients dL/dy.

    Y: (B, output_dim) raw model outputs. For SQUARED_ERROR targets is
    (B, output_dim) and loss is 0.5 * ||y - t||^2; for
    SOFTMAX_CROSS_ENTROPY targets is (B,) class indices and loss is
    -log softmax(y)[t] via a stable log-sum-exp.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if kind is LossKind.SQUARED_ERROR:
        T = np.asarray(targets, dtype=np.float64).reshape(Y.shape)
        diff = Y - T
        values = 0.5 * np.einsum("bo,bo->b", diff, diff)
        return values, diff
    t = _check_class_targets(targets, Y.shape[1])
    m = Y.max(axis=1)
    lse = m + np.log(np.exp(Y - m[:, None]).sum(axis=1))
    rows = np.arange(Y.shape[0])
    values = lse - Y[rows, t]
    upstream = _softmax(Y)
    upstream[rows, t] -= 1.0
    return values, upstream


def loss(y, target, kind):
    """Loss value and upstream gradient for one output vector."""
    y = np.asarray(y, dtype=np.float64)
    if kind is LossKind.SQUARED_ERROR:
        target = np.asarray(target, dtype=np.float64).reshape(y.shape)
        values, upstream = loss_batch(y[None, :], target[None, :], kind)
    else:
        values, upstream = loss_batch(y[None, :], np.asarray([target]), kind)
    return float(values[0]), upstream[0]


@dataclass
class AdamState:
    """Adam moments mirroring the model parameter shapes."""

    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float
    step_count: int
    m_gate: np.ndarray
    v_gate: np.ndarray
    m_leaf: np.ndarray
    v_leaf: np.ndarray

    @classmethod
    def for_model(cls, model, learning_rate=1e-3, beta1=0.9, beta2=0.999,
                  epsilon=1e-8):
        return cls(
            learning_rate, beta1, beta2, epsilon, 0,
            np.zeros_like(model.gate_w), np.zeros_like(model.gate_w),
            np.zeros_like(model.leaf_values), np.zeros_like(model.leaf_values),
        )


def adam_step(state, model, grads):
    """One Adam update, in place on the model and state.

    t <- t+1; m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
    theta <- theta - lr * mhat / (sqrt(vhat) + eps) with the usual bias
    corrections mhat = m/(1-b1^t), vhat = v/(1-b2^t).
    """
    if grads.gate_grads.shape != model.gate_w.shape:
        raise ValueError("gate gradient shape mismatch")
    if grads.leaf_grads.shape != model.leaf_values.shape:
        raise ValueError("leaf gradient shape mismatch")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for m, v, theta, g in (
        (state.m_gate, state.v_gate, model.gate_w, grads.gate_grads),
        (state.m_leaf, state.v_leaf, model.leaf_values, grads.leaf_grads),
    ):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        theta -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return model, state


@dataclass
class EvalResult:
    mean_loss: float
    error: float


def _eval_chunk_size(config):
    # cap intermediate node-output storage at ~64 MB
    per_row = config.n_nodes * config.output_dim * 8
    return int(min(4096, max(16, 64_000_000 // max(per_row, 1))))


def evaluate(model, data):
    """Mask-free mean loss and error rate of the model on a dataset.

    Classification error is the fraction of argmax mismatches (argmax
    ties resolve to the lowest class index); regression error is the
    mean squared error over examples and output components.
    """
    if data.n_examples == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    kind = loss_for_task(model.config.task)
    chunk = _eval_chunk_size(model.config)
    loss_sum = 0.0
    err_sum = 0.0
    for start in range(0, data.n_examples, chunk):
        X = data.features[start : start + chunk]
        t = data.targets[start : start + chunk]
        Y, _ = _tree.forward_batch(model, X)
        values, _ = loss_batch(Y, t, kind)
        loss_sum += float(values.sum())
        if kind is LossKind.SOFTMAX_CROSS_ENTROPY:
            pred = Y.argmax(axis=1)
            err_sum += float((pred != t.astype(np.int64)).sum())
        else:
            diff = Y - np.asarray(t, dtype=np.float64).reshape(Y.shape)
            err_sum += float(np.mean(diff * diff, axis=1).sum())
    n = data.n_examples
    return EvalResult(loss_sum / n, err_sum / n)


@dataclass
class TrainSettings:
    """Hyperparameters of one training run."""

    epochs: int
    dropout: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    mask_granularity: str = "example"  # or "minibatch"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    # Verification aid: skips mask sampling entirely and runs the
    # mask-free kernel path. A p=0 run must be bit-identical to this.
    disable_dropout: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must be in [0, 1]")
        if self.mask_granularity not in ("example", "minibatch"):
            raise ValueError(
                f"mask_granularity must be 'example' or 'minibatch', "
                f"got {self.mask_granularity!r}"
            )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_err: float
    val_err: float
    test_err: float  # nan when no test set is supplied


@dataclass
class TrainReport:
    """Per-epoch curves plus best-validation and final model snapshots."""

    records: list[EpochRecord] = field(default_factory=list)
    best_val_epoch: int = 0
    best_val_error: float = math.inf
    best_model: object = None
    final_model: object = None

    def write_curves(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,train_err,val_err,test_err\n")
            for r in self.records:
                fh.write(
                    f"{r.epoch},{r.train_loss:.17g},{r.train_err:.17g},"
                    f"{r.val_err:.17g},{r.test_err:.17g}\n"
                )


def _check_dataset(config, data, name):
    if data.n_examples == 0:
        raise ValueError(f"{name} dataset is empty")
    if data.input_dim != config.input_dim:
        raise ValueError(
            f"{name} dataset has input_dim {data.input_dim}, "
            f"model expects {config.input_dim}"
        )
    if config.task is TaskKind.CLASSIFICATION:
        _check_class_targets(data.targets, config.output_dim)
    else:
        t = np.asarray(data.targets, dtype=np.float64)
        width = 1 if t.ndim == 1 else t.shape[1]
        if width != config.output_dim:
            raise ValueError(
                f"{name} dataset has target width {width}, "
                f"model expects {config.output_dim}"
            )


def train(config, settings, train_set, val_set, test_set=None):
    """Minibatched Adam training of a freshly initialized tree.

    Per epoch: seeded reshuffle, fresh dropout masks per the configured
    granularity, mean-gradient Adam updates, then unmasked evaluation
    on val (and test when given). Fully deterministic in
    (config, settings, data): reruns produce identical reports.
    """
    _check_dataset(config, train_set, "train")
    _check_dataset(config, val_set, "val")
    if test_set is not None:
        _check_dataset(config, test_set, "test")

    model = _tree.init_model(config, settings.seed)
    kind = loss_for_task(config.task)
    adam = AdamState.for_model(
        model, settings.learning_rate, settings.beta1, settings.beta2,
        settings.epsilon,
    )
    shuffle_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([settings.seed, 0x5F]))
    )

    n = train_set.n_examples
    ni = config.n_internal
    classification = kind is LossKind.SOFTMAX_CROSS_ENTROPY
    features = np.ascontiguousarray(train_set.features, dtype=np.float64)
    targets = train_set.targets
    n_batches = (n + settings.batch_size - 1) // settings.batch_size

    def test_err(m):
        if test_set is None:
            return math.nan
        return evaluate(m, test_set).error

    report = TrainReport()
    ev_tr = evaluate(model, train_set)
    ev_va = evaluate(model, val_set)
    report.records.append(
        EpochRecord(0, ev_tr.mean_loss, ev_tr.error, ev_va.error, test_err(model))
    )
    report.best_val_epoch = 0
    report.best_val_error = ev_va.error
    report.best_model = model.copy()

    for epoch in range(1, settings.epochs + 1):
        perm = shuffle_rng.permutation(n)
        if settings.disable_dropout:
            masks = None
        elif settings.mask_granularity == "example":
            masks = _dropout.epoch_mask_matrix(
                n, ni, settings.dropout, settings.seed, epoch
            )
        else:
            masks = _dropout.epoch_mask_matrix(
                n_batches, ni, settings.dropout, settings.seed, epoch
            )

        loss_sum = 0.0
        err_sum = 0.0
        for bi in range(n_batches):
            idx = perm[bi * settings.batch_size : (bi + 1) * settings.batch_size]
            Xb = features[idx]
            tb = targets[idx]
            if masks is None:
                drops = None
            elif settings.mask_granularity == "example":
                drops = np.ascontiguousarray(masks[idx])
            else:
                drops = np.ascontiguousarray(
                    np.broadcast_to(masks[bi], (len(idx), ni))
                )
            Y, btrace = _tree.forward_batch(model, Xb, drops)
            values, upstream = loss_batch(Y, tb, kind)
            batch_loss = float(values.sum())
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {bi} "
                    f"(lr={settings.learning_rate}, step {adam.step_count})"
                )
            loss_sum += batch_loss
            if classification:
                err_sum += float((Y.argmax(axis=1) != tb.astype(np.int64)).sum())
            else:
                diff = Y - np.asarray(tb, dtype=np.float64).reshape(Y.shape)
                err_sum += float(np.mean(diff * diff, axis=1).sum())
            grads = _grad.batch_gradients(
                model, btrace, _tree.augment(Xb), upstream, drops
            )
            adam_step(adam, model, grads)

        ev_va = evaluate(model, val_set)
        report.records.append(
            EpochRecord(epoch, loss_sum / n, err_sum / n, ev_va.error,
                        test_err(model))
        )
        if ev_va.error < report.best_val_error:
            report.best_val_epoch = epoch
            report.best_val_error = ev_va.error
            report.best_model = model.copy()

    report.final_model = model
    return report
