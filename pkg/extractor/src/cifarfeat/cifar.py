"""CIFAR-10 python-batch reading.

The extracted archive is a directory cifar-10-batches-py/ holding
pickled dicts with b"data" (uint8, n x 3072 pixel rows, the three color
planes concatenated) and b"labels". Train order is data_batch_1 through
data_batch_5 concatenated; test order is test_batch.
"""

import os
import pickle

import numpy as np

TRAIN_BATCHES = tuple(f"data_batch_{i}" for i in range(1, 6))
TEST_BATCH = "test_batch"
N_PIXELS = 3072
N_CLASSES = 10


def _read_batch(path):
    with open(path, "rb") as fh:
        raw = pickle.load(fh, encoding="bytes")
    data = np.asarray(raw[b"data"], dtype=np.uint8)
    labels = np.asarray(raw[b"labels"], dtype=np.uint32)
    if data.ndim != 2 or data.shape[1] != N_PIXELS:
        raise ValueError(
            f"{path}: expected n x {N_PIXELS} pixel rows, got {data.shape}"
        )
    if labels.shape[0] != data.shape[0]:
        raise ValueError(
            f"{path}: {labels.shape[0]} labels for {data.shape[0]} images"
        )
    if labels.size and int(labels.max()) >= N_CLASSES:
        raise ValueError(f"{path}: label {int(labels.max())} out of range")
    return data, labels


def locate(root):
    """Accept either the archive root or the batches directory itself."""
    nested = os.path.join(root, "cifar-10-batches-py")
    if os.path.isdir(nested):
        return nested
    if os.path.isfile(os.path.join(root, TRAIN_BATCHES[0])):
        return root
    raise FileNotFoundError(
        f"no CIFAR-10 python batches under {root!r}; expected "
        f"cifar-10-batches-py/ with data_batch_1..5 and test_batch"
    )


def load_split(root, train):
    """Images and labels for one split, in source order."""
    folder = locate(root)
    names = TRAIN_BATCHES if train else (TEST_BATCH,)
    parts = [_read_batch(os.path.join(folder, name)) for name in names]
    images = np.concatenate([part[0] for part in parts], axis=0)
    labels = np.concatenate([part[1] for part in parts], axis=0)
    return images, labels
