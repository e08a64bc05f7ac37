"""CIFAR-10 images to pooled network features in FVEC files.

The exported vector is the 2048-wide global-average-pool activation of
Inception v3, the last layer before the classifier head. Images are
scaled to [0, 1], resized to the 299 x 299 network input with bilinear
interpolation, and normalized with the ImageNet statistics the
pretrained weights expect.

The FVEC layout written here is byte-compatible with the trainer's
reader: magic "FVEC", little-endian uint32 version/count/dim, float32
feature rows, uint32 labels.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .cifar import load_split

FEATURE_DIM = 2048
INPUT_SIZE = 299
REAL_SPLIT_SIZES = (50_000, 10_000)
FVEC_MAGIC = b"FVEC"
FVEC_VERSION = 1
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class ExtractionJob:
    """One conversion run: source directory in, two FVEC files out."""

    cifar_dir: str
    out_train: str
    out_test: str
    batch_size: int = 64
    device: str = "cpu"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def default_network(device):
    """Pretrained Inception v3 with the classifier head removed.

    In eval mode the forward pass then returns the 2048-dim pooled
    activations directly.
    """
    from torchvision import models

    try:
        weights = models.Inception_V3_Weights.IMAGENET1K_V1
        net = models.inception_v3(weights=weights)
    except Exception as exc:
        raise RuntimeError(f"pretrained weights unavailable: {exc}") from exc
    net.fc = torch.nn.Identity()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net.to(torch.device(device))


def preprocess(images, device="cpu"):
    """uint8 pixel rows (n, 3072) to a normalized (n, 3, 299, 299) batch."""
    arr = np.asarray(images)
    if arr.ndim != 2 or arr.shape[1] != 3 * 32 * 32:
        raise ValueError(f"expected n x 3072 pixel rows, got {arr.shape}")
    x = torch.from_numpy(np.ascontiguousarray(arr)).to(torch.device(device))
    x = x.reshape(-1, 3, 32, 32).to(torch.float32) / 255.0
    x = torch.nn.functional.interpolate(
        x, size=(INPUT_SIZE, INPUT_SIZE), mode="bilinear", align_corners=False
    )
    mean = torch.tensor(_IMAGENET_MEAN, device=x.device).view(1, 3, 1, 1)
    std = torch.tensor(_IMAGENET_STD, device=x.device).view(1, 3, 1, 1)
    return (x - mean) / std


_UNSET = object()


def extract(job, network=None, expected_counts=_UNSET):
    """Run both splits through the network and write FVEC files.

    expected_counts defaults to the real split sizes (train, test);
    pass None to export whatever the source directory holds. Returns a
    dict of output path -> example count.
    """
    if expected_counts is _UNSET:
        expected_counts = REAL_SPLIT_SIZES
    device = torch.device(job.device)
    if network is None:
        net = default_network(device)
    else:
        net = network.to(device).eval()
    written = {}
    splits = (
        (True, job.out_train, None if expected_counts is None else expected_counts[0]),
        (False, job.out_test, None if expected_counts is None else expected_counts[1]),
    )
    for train, out_path, want in splits:
        images, labels = load_split(job.cifar_dir, train=train)
        if want is not None and images.shape[0] != want:
            raise ValueError(
                f"{'train' if train else 'test'} split holds "
                f"{images.shape[0]} examples, expected {want}"
            )
        written[out_path] = _export_split(net, images, labels, job, out_path)
    return written


def _export_split(net, images, labels, job, out_path):
    n = images.shape[0]
    try:
        with open(out_path, "wb") as fh:
            fh.write(FVEC_MAGIC)
            fh.write(struct.pack("<III", FVEC_VERSION, n, FEATURE_DIM))
            for start in range(0, n, job.batch_size):
                batch = preprocess(images[start : start + job.batch_size], job.device)
                with torch.no_grad():
                    feats = net(batch)
                feats = feats.detach().cpu()
                if feats.ndim != 2 or feats.shape[1] != FEATURE_DIM:
                    raise ValueError(
                        f"network produced shape {tuple(feats.shape)}, "
                        f"expected (batch, {FEATURE_DIM})"
                    )
                fh.write(np.ascontiguousarray(feats.numpy(), dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(labels, dtype="<u4").tobytes())
    except Exception:
        if os.path.exists(out_path):
            os.unlink(out_path)
        raise
    return n
