"""Offline tests for the export pipeline: reading, preprocessing,
batching, serialization, and the CLI, all against the stub network."""

import numpy as np
import pytest
import torch

from feature_helpers import StubNet, write_cifar_dir

from cifarfeat import cli
from cifarfeat.cifar import load_split, locate
from cifarfeat.extract import (
    FEATURE_DIM,
    INPUT_SIZE,
    ExtractionJob,
    extract,
    preprocess,
)

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


def test_locate_accepts_archive_root_and_batches_dir(tmp_path):
    write_cifar_dir(tmp_path)
    nested = tmp_path / "cifar-10-batches-py"
    assert locate(tmp_path) == str(nested)
    assert locate(str(nested)) == str(nested)


def test_locate_missing_dir(tmp_path):
    with pytest.raises(FileNotFoundError, match="data_batch_1"):
        locate(tmp_path / "nowhere")


def test_load_split_preserves_source_order(tmp_path):
    (train_images, train_labels), (test_images, test_labels) = write_cifar_dir(
        tmp_path, train_counts=(3, 1, 2, 2, 1), n_test=5
    )
    images, labels = load_split(tmp_path, train=True)
    assert np.array_equal(images, train_images)
    assert np.array_equal(labels, train_labels)
    assert labels.dtype == np.uint32
    images, labels = load_split(tmp_path, train=False)
    assert np.array_equal(images, test_images)
    assert np.array_equal(labels, test_labels)


def test_batch_validation(tmp_path):
    import pickle

    folder = tmp_path / "cifar-10-batches-py"
    folder.mkdir()
    cases = [
        ({b"data": np.zeros((2, 100), dtype=np.uint8), b"labels": [0, 1]}, "3072"),
        ({b"data": np.zeros((2, 3072), dtype=np.uint8), b"labels": [0]}, "labels"),
        ({b"data": np.zeros((2, 3072), dtype=np.uint8), b"labels": [0, 10]}, "range"),
    ]
    for payload, match in cases:
        with open(folder / "data_batch_1", "wb") as fh:
            pickle.dump(payload, fh)
        with pytest.raises(ValueError, match=match):
            load_split(tmp_path, train=True)


def test_preprocess_shape_and_normalization():
    images = np.full((2, 3072), 255, dtype=np.uint8)
    out = preprocess(images)
    assert out.shape == (2, 3, INPUT_SIZE, INPUT_SIZE)
    assert out.dtype == torch.float32
    # constant input stays constant through bilinear resize, so every
    # channel plane must equal (1 - mean_c) / std_c
    for c in range(3):
        want = (1.0 - _IMAGENET_MEAN[c]) / _IMAGENET_STD[c]
        plane = out[:, c].numpy()
        assert np.allclose(plane, want, atol=1e-5)


def test_preprocess_rejects_bad_shape():
    with pytest.raises(ValueError, match="3072"):
        preprocess(np.zeros((4, 64), dtype=np.uint8))


def test_identical_images_in_one_batch_give_identical_rows(stub_net):
    rng = np.random.default_rng(3)
    images = rng.integers(0, 256, size=(4, 3072), dtype=np.uint8)
    images[2] = images[0]
    with torch.no_grad():
        feats = stub_net(preprocess(images))
    assert torch.equal(feats[0], feats[2])
    assert not torch.equal(feats[0], feats[1])


def test_extract_roundtrips_through_trainer_reader(tmp_path, stub_net):
    read_fvec = pytest.importorskip("hmoe.data").read_fvec
    (train_images, train_labels), (test_images, test_labels) = write_cifar_dir(
        tmp_path
    )
    job = ExtractionJob(
        str(tmp_path),
        str(tmp_path / "train.fvec"),
        str(tmp_path / "test.fvec"),
        batch_size=3,
    )
    written = extract(job, network=stub_net, expected_counts=(8, 4))
    assert written == {job.out_train: 8, job.out_test: 4}

    for path, images, labels in (
        (job.out_train, train_images, train_labels),
        (job.out_test, test_images, test_labels),
    ):
        ds = read_fvec(path)
        assert ds.features.shape == (images.shape[0], FEATURE_DIM)
        assert np.array_equal(ds.targets, labels)
        with torch.no_grad():
            want = stub_net(preprocess(images)).numpy()
        assert np.allclose(ds.features, want, atol=1e-5)


def test_extract_is_deterministic(tmp_path, stub_net):
    write_cifar_dir(tmp_path)
    outs = []
    for tag in ("a", "b"):
        job = ExtractionJob(
            str(tmp_path),
            str(tmp_path / f"train_{tag}.fvec"),
            str(tmp_path / f"test_{tag}.fvec"),
            batch_size=3,
        )
        extract(job, network=stub_net, expected_counts=(8, 4))
        outs.append((job.out_train, job.out_test))
    for first, second in zip(outs[0], outs[1]):
        with open(first, "rb") as fh:
            a = fh.read()
        with open(second, "rb") as fh:
            b = fh.read()
        assert a == b


def test_extract_rejects_wrong_feature_dim_and_removes_file(tmp_path):
    write_cifar_dir(tmp_path)
    job = ExtractionJob(
        str(tmp_path),
        str(tmp_path / "train.fvec"),
        str(tmp_path / "test.fvec"),
    )
    with pytest.raises(ValueError, match="2048"):
        extract(job, network=StubNet(out_dim=1024).eval(), expected_counts=(8, 4))
    assert not (tmp_path / "train.fvec").exists()


def test_extract_enforces_real_split_sizes(tmp_path, stub_net):
    write_cifar_dir(tmp_path)
    job = ExtractionJob(
        str(tmp_path),
        str(tmp_path / "train.fvec"),
        str(tmp_path / "test.fvec"),
    )
    with pytest.raises(ValueError, match="expected 50000"):
        extract(job, network=stub_net)


def test_fvec_bytes_match_trainer_writer(tmp_path, stub_net):
    hmoe_data = pytest.importorskip("hmoe.data")
    write_cifar_dir(tmp_path)
    job = ExtractionJob(
        str(tmp_path),
        str(tmp_path / "train.fvec"),
        str(tmp_path / "test.fvec"),
        batch_size=5,
    )
    extract(job, network=stub_net, expected_counts=(8, 4))
    ds = hmoe_data.read_fvec(job.out_train)
    twin = tmp_path / "train_rewritten.fvec"
    hmoe_data.write_fvec(ds, twin)
    with open(job.out_train, "rb") as fh:
        ours = fh.read()
    with open(twin, "rb") as fh:
        theirs = fh.read()
    assert ours == theirs


def test_job_validation(tmp_path):
    with pytest.raises(ValueError, match="batch_size"):
        ExtractionJob(str(tmp_path), "a", "b", batch_size=0)


def test_cli_end_to_end_with_stubbed_network(tmp_path, monkeypatch, capsys):
    import importlib

    # the package re-exports the extract() function under the same name
    # as its defining module, so patch the module object directly
    extract_module = importlib.import_module("cifarfeat.extract")
    write_cifar_dir(tmp_path)
    monkeypatch.setattr(
        extract_module, "default_network", lambda device: StubNet().eval()
    )
    monkeypatch.setattr(extract_module, "REAL_SPLIT_SIZES", (8, 4))
    rc = cli.main([
        "--cifar-dir", str(tmp_path),
        "--out-train", str(tmp_path / "train.fvec"),
        "--out-test", str(tmp_path / "test.fvec"),
        "--batch-size", "3",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "8 examples" in out and "4 examples" in out
    assert (tmp_path / "train.fvec").exists()
    assert (tmp_path / "test.fvec").exists()


def test_cli_reports_missing_source(tmp_path, capsys):
    rc = cli.main([
        "--cifar-dir", str(tmp_path / "nowhere"),
        "--out-train", str(tmp_path / "train.fvec"),
        "--out-test", str(tmp_path / "test.fvec"),
    ])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
