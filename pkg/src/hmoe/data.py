"""Dataset generation, ingestion, and splitting.

Three sources: a synthetic noisy sinusoid for the toy regression study,
MNIST-style IDX image/label files, and a dense binary feature-matrix
format (FVEC) for precomputed image embeddings. Features are float64
in memory; targets are uint32 class indices for classification or
float64 vectors for regression.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
FVEC_MAGIC = b"FVEC"
FVEC_VERSION = 1


class FormatError(ValueError):
    """Raised for malformed data files."""


@dataclass
class Dataset:
    """Dense feature matrix with aligned targets."""

    features: np.ndarray
    targets: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got {self.features.shape}")
        if len(self.targets) != self.features.shape[0]:
            raise ValueError(
                f"{len(self.targets)} targets for {self.features.shape[0]} examples"
            )
        if self.features.size and not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")

    @property
    def n_examples(self):
        return self.features.shape[0]

    @property
    def input_dim(self):
        return self.features.shape[1]

    def subset(self, indices, name=None):
        return Dataset(
            self.features[indices], self.targets[indices],
            name if name is not None else self.name,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Ratio split descriptor, e.g. train:val = 5:1."""

    train_parts: int
    val_parts: int
    seed: int = 0

    def __post_init__(self):
        if self.train_parts < 1 or self.val_parts < 1:
            raise ValueError("ratio parts must be positive")

    @classmethod
    def parse(cls, text, seed=0):
        try:
            a, b = (int(part) for part in text.split(":"))
        except ValueError:
            raise ValueError(f"cannot parse split ratio {text!r}, expected 'A:B'")
        return cls(a, b, seed)


def gen_sinusoid(n=200, noise_std=0.1, seed=0):
    """Noisy sinusoid sample: x ~ U[-2pi, 2pi], y = sin(x) + N(0, std^2).

    x values are drawn first, then the noise, from one PCG64 stream, so
    the dataset is a pure function of (n, noise_std, seed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.uniform(-2.0 * np.pi, 2.0 * np.pi, size=n)
    y = np.sin(x) + rng.normal(0.0, noise_std, size=n)
    return Dataset(x[:, None], y[:, None], name=f"sinusoid(n={n},std={noise_std},seed={seed})")


def sinusoid_grid(n_points=1000, lo=-2.0 * np.pi, hi=2.0 * np.pi):
    """Noiseless evaluation grid for the sinusoid task."""
    x = np.linspace(lo, hi, n_points)
    return Dataset(x[:, None], np.sin(x)[:, None], name="sinusoid-grid")


def _open_maybe_gz(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count, path, what):
    raw = fh.read(count)
    if len(raw) != count:
        raise FormatError(f"{path}: truncated {what} ({len(raw)}/{count} bytes)")
    return raw


def read_idx(images_path, labels_path):
    """Load an IDX image/label file pair (MNIST layout).

    Pixels are scaled to [0, 1] and images flattened row-major. The
    two files must agree on the example count.
    """
    with _open_maybe_gz(images_path) as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        pixels = np.frombuffer(
            _read_exact(fh, count * rows * cols, images_path, "pixel data"),
            dtype=np.uint8,
        )
    with _open_maybe_gz(labels_path) as fh:
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, labels_path, "header"))
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        labels = np.frombuffer(
            _read_exact(fh, label_count, labels_path, "label data"), dtype=np.uint8
        )
    if label_count != count:
        raise FormatError(
            f"count mismatch: {count} images vs {label_count} labels"
        )
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.uint32), name=str(images_path))


def write_fvec(dataset, path):
    """Write a dense float32 feature matrix with uint32 class labels."""
    targets = np.asarray(dataset.targets)
    if targets.ndim != 1:
        raise ValueError("write_fvec requires class-index targets")
    n, dim = dataset.features.shape
    with open(path, "wb") as fh:
        fh.write(FVEC_MAGIC)
        fh.write(struct.pack("<III", FVEC_VERSION, n, dim))
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(targets, dtype="<u4").tobytes())


def read_fvec(path):
    """Read a file written by write_fvec (round-trips at float32)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    magic = raw[:4]
    if magic != FVEC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    version, n, dim = struct.unpack_from("<III", raw, 4)
    if version != FVEC_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expect = 16 + 4 * n * dim + 4 * n
    if len(raw) != expect:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, expected {expect}")
    features = np.frombuffer(raw, dtype="<f4", count=n * dim, offset=16)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=16 + 4 * n * dim)
    return Dataset(
        features.reshape(n, dim).astype(np.float64),
        labels.astype(np.uint32),
        name=str(path),
    )


def split(dataset, spec):
    """Seeded shuffle then contiguous cut into (train, val).

    Train gets floor(n * a / (a + b)) examples, val the remainder;
    every example lands in exactly one part.
    """
    parts = spec.train_parts + spec.val_parts
    n = dataset.n_examples
    if n < parts:
        raise ValueError(f"cannot split {n} examples into {parts} parts")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    perm = rng.permutation(n)
    n_train = n * spec.train_parts // parts
    train = dataset.subset(perm[:n_train], name=f"{dataset.name}[train]")
    val = dataset.subset(perm[n_train:], name=f"{dataset.name}[val]")
    return train, val


def write_xy_csv(dataset, path):
    """Export a scalar-input scalar-target dataset as x,y rows."""
    if dataset.input_dim != 1:
        raise ValueError("CSV export expects a 1-D feature column")
    targets = np.asarray(dataset.targets, dtype=np.float64).reshape(-1)
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for x, y in zip(dataset.features[:, 0], targets):
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_xy_csv(path):
    """Read a regression CSV: last column is the target."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    if rows.shape[1] < 2:
        raise FormatError(f"{path}: need at least two columns")
    return Dataset(rows[:, :-1], rows[:, -1:], name=str(path))
