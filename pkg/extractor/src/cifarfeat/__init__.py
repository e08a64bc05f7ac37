"""CIFAR-10 to pooled-feature FVEC export."""

from .extract import FEATURE_DIM, ExtractionJob, extract, preprocess

__all__ = ["FEATURE_DIM", "ExtractionJob", "extract", "preprocess"]
