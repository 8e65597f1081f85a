import struct

import numpy as np
import pytest

from qsq.datasets import (
    Dataset,
    load_cifar10,
    load_idx_images,
    load_idx_labels,
    load_mnist,
    write_idx_images,
    write_idx_labels,
)


class TestDataset:
    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2, 2, 1), np.uint8), np.zeros(2, np.int64))

    def test_negative_labels(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((1, 2, 2, 1), np.uint8), np.array([-1]))

    def test_len(self):
        assert len(Dataset(np.zeros((5, 2, 2, 1), np.uint8), np.zeros(5, np.int64))) == 5


class TestIdx:
    @pytest.mark.parametrize("suffix", ["", ".gz"])
    def test_image_round_trip(self, tmp_path, suffix):
        rng = np.random.default_rng(70)
        images = rng.integers(0, 256, size=(7, 5, 4), dtype=np.uint8)
        path = tmp_path / f"imgs-idx3-ubyte{suffix}"
        write_idx_images(images, path)
        back = load_idx_images(path)
        assert back.shape == (7, 5, 4, 1)
        np.testing.assert_array_equal(back[..., 0], images)

    @pytest.mark.parametrize("suffix", ["", ".gz"])
    def test_label_round_trip(self, tmp_path, suffix):
        labels = np.array([0, 1, 9, 255])
        path = tmp_path / f"labels-idx1-ubyte{suffix}"
        write_idx_labels(labels, path)
        np.testing.assert_array_equal(load_idx_labels(path), labels)

    def test_header_is_big_endian(self, tmp_path):
        path = tmp_path / "imgs"
        write_idx_images(np.zeros((2, 3, 4), np.uint8), path)
        magic, count, rows, cols = struct.unpack(">IIII", path.read_bytes()[:16])
        assert (magic, count, rows, cols) == (0x00000803, 2, 3, 4)

    def test_bad_image_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">IIII", 0x00000801, 1, 1, 1) + b"\x00")
        with pytest.raises(ValueError, match="magic"):
            load_idx_images(path)

    def test_bad_label_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">II", 0x00000803, 1) + b"\x00")
        with pytest.raises(ValueError, match="magic"):
            load_idx_labels(path)

    def test_payload_size_checked(self, tmp_path):
        path = tmp_path / "short"
        path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 2, 2) + b"\x00" * 7)
        with pytest.raises(ValueError, match="size"):
            load_idx_images(path)

    def test_load_mnist_pairs_files(self, tmp_path):
        rng = np.random.default_rng(71)
        images = rng.integers(0, 256, size=(3, 2, 2), dtype=np.uint8)
        labels = np.array([1, 0, 2])
        write_idx_images(images, tmp_path / "i.gz")
        write_idx_labels(labels, tmp_path / "l.gz")
        ds = load_mnist(tmp_path / "i.gz", tmp_path / "l.gz")
        assert len(ds) == 3
        np.testing.assert_array_equal(ds.labels, labels)


class TestCifar10:
    def test_record_parse(self, tmp_path):
        rng = np.random.default_rng(72)
        n = 4
        labels = rng.integers(0, 10, size=n, dtype=np.uint8)
        planes = rng.integers(0, 256, size=(n, 3, 32, 32), dtype=np.uint8)
        records = np.concatenate([labels[:, None], planes.reshape(n, -1)], axis=1)
        path = tmp_path / "batch.bin"
        path.write_bytes(records.tobytes())
        ds = load_cifar10([path])
        assert ds.images.shape == (n, 32, 32, 3)
        np.testing.assert_array_equal(ds.labels, labels)
        # channel-planar unpack: red plane first
        np.testing.assert_array_equal(ds.images[..., 0], planes[:, 0])
        np.testing.assert_array_equal(ds.images[..., 2], planes[:, 2])

    def test_multiple_batches_concatenate(self, tmp_path):
        record = bytes([5]) + bytes(3072)
        (tmp_path / "a.bin").write_bytes(record)
        (tmp_path / "b.bin").write_bytes(record * 2)
        ds = load_cifar10([tmp_path / "a.bin", tmp_path / "b.bin"])
        assert len(ds) == 3

    def test_partial_record_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(3072))
        with pytest.raises(ValueError, match="records"):
            load_cifar10([path])

    def test_no_batches(self):
        with pytest.raises(ValueError):
            load_cifar10([])
