import gzip
import struct

import numpy as np
import numpy.testing as npt
import pytest

from tightbox.datasets import (
    IdxFormatError,
    gen_lowrank,
    gen_toy2d,
    load_mnist,
    write_idx_images,
    write_idx_labels,
)
from tightbox.rng import Rng


@pytest.fixture
def idx_pair(tmp_path):
    gen = Rng(1).generator()
    images = gen.integers(0, 256, size=(40, 28, 28)).astype(np.uint8)
    images[0, 0, 0] = 255
    labels = (np.arange(40) % 10).astype(np.uint8)
    img_path, lbl_path = tmp_path / "imgs", tmp_path / "lbls"
    write_idx_images(img_path, images)
    write_idx_labels(lbl_path, labels)
    return img_path, lbl_path, images, labels


class TestIdxLoading:
    def test_roundtrip_bit_exact(self, idx_pair):
        img_path, lbl_path, images, labels = idx_pair
        ds = load_mnist(img_path, lbl_path)
        assert len(ds) == 40
        assert ds.image_shape == (1, 28, 28)
        assert ds.domain == (0.0, 1.0)
        npt.assert_array_equal(ds.labels, labels)
        npt.assert_array_equal(np.round(ds.inputs * 255.0).astype(np.uint8).reshape(-1, 28, 28), images)

    def test_pixel_255_maps_to_one_exactly(self, idx_pair):
        img_path, lbl_path, *_ = idx_pair
        ds = load_mnist(img_path, lbl_path)
        assert ds.inputs[0, 0] == 1.0

    def test_limit_keeps_file_order(self, idx_pair):
        img_path, lbl_path, _, labels = idx_pair
        ds = load_mnist(img_path, lbl_path, limit=7)
        assert len(ds) == 7
        npt.assert_array_equal(ds.labels, labels[:7])

    def test_header_self_describes_count(self, idx_pair):
        img_path, *_ = idx_pair
        header = img_path.read_bytes()[:16]
        magic, count, rows, cols = struct.unpack(">IIII", header)
        assert (magic, count, rows, cols) == (0x803, 40, 28, 28)

    def test_bad_magic_reports_offset(self, idx_pair, tmp_path):
        img_path, lbl_path, *_ = idx_pair
        corrupt = tmp_path / "bad"
        corrupt.write_bytes(b"\x00\x00\x08\x04" + img_path.read_bytes()[4:])
        with pytest.raises(IdxFormatError, match="offset 0"):
            load_mnist(corrupt, lbl_path)

    def test_truncation_reports_offset(self, idx_pair, tmp_path):
        img_path, lbl_path, *_ = idx_pair
        short = tmp_path / "short"
        short.write_bytes(img_path.read_bytes()[:-10])
        with pytest.raises(IdxFormatError, match="truncated"):
            load_mnist(short, lbl_path)

    def test_trailing_bytes_rejected(self, idx_pair, tmp_path):
        img_path, lbl_path, *_ = idx_pair
        padded = tmp_path / "padded"
        padded.write_bytes(img_path.read_bytes() + b"\x00")
        with pytest.raises(IdxFormatError, match="trailing"):
            load_mnist(padded, lbl_path)

    def test_count_mismatch_rejected(self, idx_pair, tmp_path):
        img_path, lbl_path, _, labels = idx_pair
        fewer = tmp_path / "fewer"
        write_idx_labels(fewer, labels[:30])
        with pytest.raises(IdxFormatError, match="images vs"):
            load_mnist(img_path, fewer)

    def test_label_range_checked(self, idx_pair, tmp_path):
        img_path, _, _, labels = idx_pair
        bad = labels.copy()
        bad[3] = 11
        path = tmp_path / "badlabels"
        write_idx_labels(path, bad)
        with pytest.raises(IdxFormatError, match="range"):
            load_mnist(img_path, path)

    def test_gzip_transparent(self, idx_pair, tmp_path):
        img_path, lbl_path, *_ = idx_pair
        gz = tmp_path / "imgs.gz"
        gz.write_bytes(gzip.compress(img_path.read_bytes()))
        ds = load_mnist(gz, lbl_path)
        assert len(ds) == 40


class TestToy2d:
    def test_minimum_size_has_both_classes(self):
        ds = gen_toy2d(Rng(1), 2)
        assert set(ds.labels) == {0, 1}

    def test_margin_and_domain(self):
        ds = gen_toy2d(Rng(2), 400)
        assert np.all(ds.inputs >= 0.0) and np.all(ds.inputs <= 1.0)
        a, b = ds.inputs[ds.labels == 0], ds.inputs[ds.labels == 1]
        gaps = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        assert gaps.min() >= 0.5

    def test_perceptron_separates(self):
        ds = gen_toy2d(Rng(3), 200)
        x = np.hstack([ds.inputs, np.ones((len(ds), 1))])
        y = 2.0 * ds.labels - 1.0
        w = np.zeros(3)
        for _ in range(100):
            wrong = (np.sign(x @ w) != y)
            if not wrong.any():
                break
            i = int(np.flatnonzero(wrong)[0])
            w += y[i] * x[i]
        assert np.all(np.sign(x @ w) == y)

    def test_deterministic(self):
        a = gen_toy2d(Rng(4), 50)
        b = gen_toy2d(Rng(4), 50)
        assert a.inputs.tobytes() == b.inputs.tobytes()

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            gen_toy2d(Rng(0), 1)


class TestLowrank:
    def test_rank_and_shapes(self):
        ds = gen_lowrank(Rng(5), 100, 12, 3)
        assert ds.inputs.shape == (100, 12)
        assert ds.domain is None
        s = np.linalg.svd(ds.inputs, compute_uv=False)
        assert (s > 1e-9).sum() == 3

    def test_deterministic(self):
        a = gen_lowrank(Rng(6), 20, 8, 2)
        b = gen_lowrank(Rng(6), 20, 8, 2)
        assert a.inputs.tobytes() == b.inputs.tobytes()


class TestSynthData:
    def test_generated_files_load_and_are_deterministic(self, tmp_path):
        from tightbox.synthdata import synthesize_digit_idx

        root1 = synthesize_digit_idx(tmp_path / "a", n_train=60, n_test=25, seed=5)
        root2 = synthesize_digit_idx(tmp_path / "b", n_train=60, n_test=25, seed=5)
        for name in ("train-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            assert (root1 / name).read_bytes() == (root2 / name).read_bytes()
        from tightbox.datasets import load_mnist_split

        train = load_mnist_split("train", root1)
        test = load_mnist_split("test", root1)
        assert len(train) == 60 and len(test) == 25
        assert train.inputs.min() >= 0.0 and train.inputs.max() <= 1.0
        assert set(np.unique(train.labels)) <= set(range(10))
