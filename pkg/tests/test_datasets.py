import struct

import numpy as np
import pytest

from onebitms import load_cloud, load_mnist, sample_sphere, save_cloud
from onebitms.datasets import parse_idx_images, parse_idx_labels
from onebitms.errors import DomainError, FormatError


def idx_images_bytes(images):
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    return struct.pack(">IIII", 0x00000803, n, rows, cols) + images.tobytes()


def idx_labels_bytes(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x00000801, labels.shape[0]) + labels.tobytes()


class TestSampleSphere:
    def test_zero_dimensional_sphere(self):
        cloud = sample_sphere(0, 5, 50, seed=1)
        assert set(np.round(cloud.data[:, 0], 12)) <= {1.0, -1.0}
        assert np.all(cloud.data[:, 1:] == 0.0)

    def test_unit_rows_and_zero_tail(self):
        cloud = sample_sphere(2, 20, 100, seed=2)
        norms = np.linalg.norm(cloud.data, axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-12
        assert np.all(cloud.data[:, 3:] == 0.0)

    def test_empirical_mean_near_zero(self):
        cloud = sample_sphere(2, 5, 10**5, seed=3)
        assert float(np.linalg.norm(cloud.data.mean(axis=0))) <= 0.02

    def test_seed_deterministic(self):
        a = sample_sphere(3, 8, 20, seed=4)
        b = sample_sphere(3, 8, 20, seed=4)
        assert np.array_equal(a.data, b.data)

    def test_dimension_guard(self):
        with pytest.raises(DomainError):
            sample_sphere(5, 5, 10, seed=0)
        with pytest.raises(DomainError):
            sample_sphere(2, 10, 0, seed=0)


class TestCloudFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        cloud = sample_sphere(2, 7, 31, seed=5)
        path = tmp_path / "c.omsp"
        save_cloud(cloud, path)
        back = load_cloud(path)
        assert back.data.tobytes() == cloud.data.tobytes()
        assert back.normalized

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.omsp"
        path.write_bytes(b"XXXX" + b"\x00" * 8)
        with pytest.raises(FormatError) as exc:
            load_cloud(path)
        assert exc.value.offset == 0

    def test_truncated(self, tmp_path):
        cloud = sample_sphere(1, 4, 9, seed=6)
        path = tmp_path / "cut.omsp"
        save_cloud(cloud, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError):
            load_cloud(path)


class TestIdxParsing:
    def test_header_dims_match_hand_decoded(self):
        raw = idx_images_bytes(np.zeros((3, 4, 5), dtype=np.uint8))
        # hand decode: magic 00 00 08 03, then three big-endian u32 dims
        assert raw[:4] == bytes([0, 0, 8, 3])
        assert int.from_bytes(raw[4:8], "big") == 3
        assert int.from_bytes(raw[8:12], "big") == 4
        assert int.from_bytes(raw[12:16], "big") == 5
        images = parse_idx_images(raw)
        assert images.shape == (3, 4, 5)

    def test_pixels_bit_exact(self):
        rng = np.random.default_rng(1)
        imgs = rng.integers(0, 256, size=(2, 3, 3), dtype=np.uint8)
        assert np.array_equal(parse_idx_images(idx_images_bytes(imgs)), imgs)

    def test_bad_image_magic_offset(self):
        raw = struct.pack(">IIII", 0x00000802, 1, 2, 2) + b"\x00" * 4
        with pytest.raises(FormatError) as exc:
            parse_idx_images(raw)
        assert exc.value.offset == 0

    def test_truncated_pixels_offset(self):
        raw = idx_images_bytes(np.zeros((2, 2, 2), dtype=np.uint8))[:-3]
        with pytest.raises(FormatError) as exc:
            parse_idx_images(raw)
        assert exc.value.offset is not None

    def test_label_parsing(self):
        labels = np.array([1, 0, 7, 1], dtype=np.uint8)
        assert np.array_equal(parse_idx_labels(idx_labels_bytes(labels)), labels)

    def test_bad_label_magic(self):
        with pytest.raises(FormatError):
            parse_idx_labels(struct.pack(">II", 0x00000803, 0))


class TestLoadMnist:
    def make_pair(self, tmp_path, images, labels):
        img = tmp_path / "train-images-idx3-ubyte"
        lbl = tmp_path / "train-labels-idx1-ubyte"
        img.write_bytes(idx_images_bytes(images))
        lbl.write_bytes(idx_labels_bytes(labels))
        return img, lbl

    def test_constant_image_normalizes_to_equal_coordinates(self, tmp_path):
        images = np.full((1, 28, 28), 9, dtype=np.uint8)
        self.make_pair(tmp_path, images, np.array([1], dtype=np.uint8))
        cloud = load_mnist(tmp_path, digit=1, n=5)
        assert cloud.n == 1
        # 784 equal coordinates at unit norm: each is 1/28
        assert np.allclose(cloud.data[0], 1.0 / 28.0, atol=1e-12)

    def test_label_filter_and_count(self, tmp_path):
        rng = np.random.default_rng(2)
        images = rng.integers(1, 255, size=(6, 4, 4), dtype=np.uint8)
        labels = np.array([1, 0, 1, 2, 1, 0], dtype=np.uint8)
        self.make_pair(tmp_path, images, labels)
        cloud = load_mnist(tmp_path, digit=1, n=2)
        assert cloud.n == 2
        expected = images[0].reshape(-1).astype(float)
        expected /= np.linalg.norm(expected)
        assert np.allclose(cloud.data[0], expected, atol=1e-12)

    def test_absent_digit_warns_and_returns_empty(self, tmp_path):
        images = np.ones((2, 3, 3), dtype=np.uint8)
        self.make_pair(tmp_path, images, np.array([0, 2], dtype=np.uint8))
        with pytest.warns(UserWarning):
            cloud = load_mnist(tmp_path, digit=7, n=5)
        assert cloud.n == 0
        assert cloud.D == 9

    def test_count_mismatch(self, tmp_path):
        images = np.ones((2, 3, 3), dtype=np.uint8)
        self.make_pair(tmp_path, images, np.array([1], dtype=np.uint8))
        with pytest.raises(FormatError):
            load_mnist(tmp_path, digit=1, n=5)

    def test_explicit_file_paths(self, tmp_path):
        images = np.full((1, 2, 2), 4, dtype=np.uint8)
        img, lbl = self.make_pair(tmp_path, images, np.array([3], dtype=np.uint8))
        cloud = load_mnist(img, digit=3, n=1, labels_path=lbl)
        assert cloud.n == 1

    def test_unnormalized_scaling(self, tmp_path):
        images = np.full((1, 2, 2), 255, dtype=np.uint8)
        self.make_pair(tmp_path, images, np.array([1], dtype=np.uint8))
        cloud = load_mnist(tmp_path, digit=1, n=1, normalize=False)
        assert np.allclose(cloud.data[0], 1.0, atol=1e-12)
