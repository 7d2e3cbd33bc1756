import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ttfs_snn.dataset import (
    IdxParseError,
    LabeledDataset,
    crop_center,
    find_split,
    load_idx_images,
    load_idx_labels,
    load_mnist,
    parse_idx_images,
    parse_idx_labels,
)

from conftest import DATA_DIR, needs_mnist


def image_bytes(imgs: np.ndarray, magic: int = 0x803) -> bytes:
    n, r, c = imgs.shape
    return struct.pack(">4I", magic, n, r, c) + imgs.astype(np.uint8).tobytes()


def label_bytes(labels, magic: int = 0x801) -> bytes:
    return struct.pack(">2I", magic, len(labels)) + bytes(labels)


def test_image_round_trip(tmp_path):
    imgs = np.arange(3 * 28 * 28, dtype=np.uint32).reshape(3, 28, 28) % 256
    p = tmp_path / "imgs"
    p.write_bytes(image_bytes(imgs))
    out = load_idx_images(p)
    assert out.dtype == np.uint8
    np.testing.assert_array_equal(out, imgs)


def test_gzip_variant(tmp_path):
    imgs = np.full((2, 28, 28), 7, dtype=np.uint8)
    p = tmp_path / "imgs.gz"
    p.write_bytes(gzip.compress(image_bytes(imgs)))
    np.testing.assert_array_equal(load_idx_images(p), imgs)


def test_bad_magic_names_offset():
    with pytest.raises(IdxParseError) as err:
        parse_idx_images(image_bytes(np.zeros((1, 2, 2)), magic=0x801))
    assert err.value.offset == 0


def test_truncated_payload():
    buf = image_bytes(np.zeros((4, 28, 28)))[:-10]
    with pytest.raises(IdxParseError, match="truncated"):
        parse_idx_images(buf)


def test_empty_file_fails_at_offset_zero(tmp_path):
    p = tmp_path / "empty"
    p.write_bytes(b"")
    with pytest.raises(IdxParseError) as err:
        load_idx_images(p)
    assert err.value.offset == 0


def test_trailing_bytes_rejected():
    with pytest.raises(IdxParseError, match="trailing"):
        parse_idx_images(image_bytes(np.zeros((1, 2, 2))) + b"\x00")


def test_labels_round_trip_and_range(tmp_path):
    p = tmp_path / "lbl"
    p.write_bytes(label_bytes([3, 1, 4, 1, 5, 9]))
    np.testing.assert_array_equal(load_idx_labels(p), [3, 1, 4, 1, 5, 9])
    with pytest.raises(IdxParseError) as err:
        parse_idx_labels(label_bytes([1, 10, 2]))
    assert err.value.offset == 9


def test_label_magic_mismatch():
    with pytest.raises(IdxParseError, match="magic"):
        parse_idx_labels(label_bytes([1], magic=0x803))


def test_zero_count_labels():
    assert parse_idx_labels(label_bytes([])).shape == (0,)


def test_crop_examples():
    assert not crop_center(np.zeros((28, 28), np.uint8)).any()
    img = np.zeros((28, 28), np.uint8)
    img[4, 4] = 200
    out = crop_center(img)
    assert out.shape == (20, 20) and out[0, 0] == 200 and out.sum() == 200
    corner = np.zeros((28, 28), np.uint8)
    corner[0, 0] = 255
    assert not crop_center(corner).any()


def test_crop_rejects_wrong_shape():
    with pytest.raises(ValueError):
        crop_center(np.zeros((20, 20)))


@given(arrays(np.uint8, (28, 28)))
@settings(max_examples=50, deadline=None)
def test_crop_is_a_projection(img):
    out = crop_center(img)
    np.testing.assert_array_equal(out, img[4:24, 4:24])
    assert int(out.sum()) <= int(img.sum())


def test_dataset_length_mismatch():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 20, 20), np.uint8), np.zeros(2, np.int64))


def test_find_split_both_spellings(tmp_path):
    for name in ("t10k-images-idx3-ubyte", "t10k-labels.idx1-ubyte.gz"):
        (tmp_path / name).write_bytes(b"")
    imgs, lbls = find_split(tmp_path, "test")
    assert imgs.name == "t10k-images-idx3-ubyte"
    assert lbls.name == "t10k-labels.idx1-ubyte.gz"
    with pytest.raises(FileNotFoundError):
        find_split(tmp_path, "train")


def test_load_mnist_requires_directory(monkeypatch):
    monkeypatch.delenv("TTFS_SNN_DATA", raising=False)
    with pytest.raises(FileNotFoundError, match="TTFS_SNN_DATA"):
        load_mnist()


@needs_mnist
def test_real_mnist_counts(mnist_test):
    imgs = load_idx_images(find_split(DATA_DIR, "test")[0])
    assert imgs.shape == (10000, 28, 28)
    assert mnist_test.images.shape == (10000, 20, 20)
    # Well-known leading labels of the MNIST test split.
    np.testing.assert_array_equal(mnist_test.labels[:10], [7, 2, 1, 0, 4, 1, 4, 9, 5, 9])
    assert load_mnist(DATA_DIR, "train").labels.shape == (60000,)
