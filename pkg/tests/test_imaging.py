import numpy as np
import pytest

from cbcnn.errors import LengthMismatchError, NegativeInputError
from cbcnn.imaging import (
    ChurnImage,
    ImageEncoder,
    ImageLayout,
    batch_resize,
    image_to_row,
    infer_layout,
    normalize_255,
    resize_bilinear,
    rows_to_tensor,
    to_image,
    write_pnm,
)


class TestNormalize255:
    def test_direct_scaling(self):
        X = np.array([[1.0], [2.0], [4.0]])
        np.testing.assert_allclose(normalize_255(X), [[63.75], [127.5], [255.0]])

    def test_constant_positive_column(self):
        X = np.full((4, 1), 7.0)
        np.testing.assert_array_equal(normalize_255(X), np.full((4, 1), 255.0))

    def test_all_zero_column(self):
        X = np.zeros((3, 2))
        np.testing.assert_array_equal(normalize_255(X), np.zeros((3, 2)))

    def test_negative_rejected(self):
        with pytest.raises(NegativeInputError):
            normalize_255(np.array([[-1.0], [2.0]]))

    def test_positive_max_column_hits_255(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(0, 9, size=(20, 5))
        out = normalize_255(X)
        np.testing.assert_allclose(out.max(axis=0), 255.0)


class TestToImage:
    def test_channel_block_fill(self):
        layout = ImageLayout(5, 4, 3)
        row = np.arange(60, dtype=float)
        img = to_image(row, layout)
        # first 20 features fill channel 0 row-major
        np.testing.assert_array_equal(img.pixels[:, :, 0].reshape(-1), np.arange(20))
        np.testing.assert_array_equal(
            img.pixels[:, :, 1].reshape(-1), np.arange(20, 40)
        )
        assert img.pixels[0, 1, 0] == 1.0

    def test_single_pixel(self):
        img = to_image([42.0], ImageLayout(1, 1, 1))
        assert img.pixels.shape == (1, 1, 1)
        assert img.pixels[0, 0, 0] == 42.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            to_image(np.zeros(59), ImageLayout(5, 4, 3))

    def test_roundtrip_exact(self):
        rng = np.random.default_rng(1)
        row = rng.uniform(0, 255, 60)
        layout = ImageLayout(5, 4, 3)
        np.testing.assert_array_equal(image_to_row(to_image(row, layout)), row)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 255, (7, 24))
        layout = ImageLayout(4, 2, 3)
        batch = rows_to_tensor(X, layout)
        for i in range(7):
            np.testing.assert_array_equal(batch[i], to_image(X[i], layout).pixels)


class TestResize:
    def test_constant_image(self):
        img = np.full((3, 5, 2), 9.0)
        out = resize_bilinear(img, 8, 8)
        np.testing.assert_allclose(out, 9.0)
        assert out.shape == (8, 8, 2)

    def test_bilinear_midpoint(self):
        img = np.array([[0.0, 10.0], [20.0, 30.0]]).reshape(2, 2, 1)
        out = resize_bilinear(img, 3, 3)
        assert out[1, 1, 0] == 15.0
        # corners preserved under corner alignment
        assert out[0, 0, 0] == 0.0
        assert out[2, 2, 0] == 30.0

    def test_target_32(self):
        img = np.random.default_rng(3).uniform(0, 255, (5, 4, 3))
        out = resize_bilinear(img, 32, 32)
        assert out.shape == (32, 32, 3)

    def test_no_overshoot(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 255, (5, 4, 3))
        out = resize_bilinear(img, 17, 23)
        for c in range(3):
            assert out[:, :, c].min() >= img[:, :, c].min() - 1e-12
            assert out[:, :, c].max() <= img[:, :, c].max() + 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(5)
        imgs = rng.uniform(0, 255, (4, 5, 4, 3))
        batch = batch_resize(imgs, 9, 9)
        for i in range(4):
            np.testing.assert_allclose(
                batch[i], resize_bilinear(imgs[i], 9, 9), atol=1e-12
            )


class TestInferLayout:
    def test_sixty_features_three_channels(self):
        assert infer_layout(60, 3) == ImageLayout(5, 4, 3)

    def test_indivisible_falls_back_to_one_channel(self):
        lay = infer_layout(44, 3)
        assert lay.channels == 1
        assert lay.rows * lay.cols == 44

    def test_square(self):
        assert infer_layout(48, 3) == ImageLayout(4, 4, 3)


class TestImageEncoder:
    def test_train_columns_hit_255(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(0, 5, (30, 12))
        enc = ImageEncoder(ImageLayout(2, 2, 3), 8, 8).fit(X)
        F = enc.normalize(X)
        np.testing.assert_allclose(F.max(axis=0), 255.0)
        assert F.min() >= 0.0

    def test_heldout_clamped(self):
        X = np.array([[0.0, 1.0], [4.0, 2.0]])
        enc = ImageEncoder(ImageLayout(2, 1, 1), 4, 4).fit(X)
        F = enc.normalize(np.array([[9.0, -5.0]]))
        assert F.max() <= 255.0
        assert F.min() >= 0.0

    def test_signed_features_shifted_like_training(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(50, 6))  # centered, signed (post-reduction scale)
        enc = ImageEncoder(ImageLayout(2, 1, 3), 6, 6).fit(X)
        F = enc.normalize(X)
        assert F.min() >= 0.0 and F.max() <= 255.0
        images = enc.transform(X)
        assert images.shape == (50, 6, 6, 3)
        assert images.min() >= 0.0 and images.max() <= 255.0

    def test_auto_layout(self):
        X = np.random.default_rng(8).uniform(0, 1, (10, 60))
        enc = ImageEncoder(out_h=16, out_w=16).fit(X)
        assert enc.layout_ == ImageLayout(5, 4, 3)
        assert enc.transform(X).shape == (10, 16, 16, 3)


def test_churn_image_range_invariant():
    with pytest.raises(ValueError):
        ChurnImage(np.full((2, 2, 1), 300.0))


def test_write_pnm(tmp_path):
    img = np.random.default_rng(9).uniform(0, 255, (4, 5, 3))
    paths = write_pnm(img, tmp_path / "img.pnm")
    text = open(paths[0], encoding="ascii").read()
    assert text.startswith("P3 5 4 255")
    gray = np.random.default_rng(10).uniform(0, 255, (4, 5, 1))
    paths = write_pnm(gray, tmp_path / "gray.pnm")
    assert open(paths[0], encoding="ascii").read().startswith("P2 5 4 255")
