"""Green chromatic coordinate: closed forms, invariances, group statistics."""

import numpy as np
import pytest

from chromavit import chromatic, model_io
from chromavit.chromatic import (
    RgbImage,
    gcc_image,
    gcc_pixel,
    gcc_stats,
    merge_channels,
    split_channels,
    stats_csv,
)
from chromavit.errors import DimensionError, DomainError

from conftest import make_disk_corpus


def solid(r, g, b, h=4, w=4):
    px = np.empty((h, w, 3), np.float32)
    px[:, :] = (r, g, b)
    return RgbImage(px)


class TestRgbImage:
    def test_rejects_bad_shape(self):
        with pytest.raises(DimensionError):
            RgbImage(np.zeros((4, 4), np.float32))

    def test_rejects_out_of_range(self):
        px = np.zeros((2, 2, 3), np.float32)
        px[0, 0, 0] = 1.5
        with pytest.raises(DomainError):
            RgbImage(px)

    def test_rejects_non_finite(self):
        px = np.zeros((2, 2, 3), np.float32)
        px[1, 1, 2] = np.nan
        with pytest.raises(DomainError):
            RgbImage(px)

    def test_pixels_frozen(self):
        img = solid(0.1, 0.2, 0.3)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 0.9


class TestSplitChannels:
    def test_single_pixel(self):
        img = RgbImage(np.array([[[0.2, 0.5, 0.3]]], np.float32))
        r, g, b = split_channels(img)
        assert r.data[0, 0] == np.float32(0.2)
        assert g.data[0, 0] == np.float32(0.5)
        assert b.data[0, 0] == np.float32(0.3)

    def test_pure_green(self):
        r, g, b = split_channels(solid(0.0, 1.0, 0.0))
        assert (r.data == 0).all() and (b.data == 0).all() and (g.data == 1).all()

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(0)
        img = RgbImage(rng.uniform(0, 1, (5, 7, 3)).astype(np.float32))
        back = merge_channels(*split_channels(img))
        np.testing.assert_array_equal(back.pixels, img.pixels)


class TestGccPixel:
    def test_pure_green(self):
        assert gcc_pixel(0.0, 1.0, 0.0) == 1.0

    def test_achromatic(self):
        assert gcc_pixel(0.4, 0.4, 0.4) == pytest.approx(1 / 3, abs=1e-15)

    def test_direct_evaluation(self):
        assert gcc_pixel(0.1, 0.6, 0.3) == pytest.approx(0.6, abs=1e-12)

    def test_black_pixel_neutral(self):
        assert gcc_pixel(0.0, 0.0, 0.0) == pytest.approx(1 / 3, abs=1e-15)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            gcc_pixel(-0.1, 0.5, 0.5)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            r, g, b = rng.uniform(0.0, 1.0, 3)
            lam = rng.uniform(1e-3, 1e3)
            assert abs(gcc_pixel(lam * r, lam * g, lam * b) - gcc_pixel(r, g, b)) < 1e-7


class TestGccImage:
    def test_uniform_green(self):
        assert gcc_image(solid(0.0, 1.0, 0.0)) == 1.0

    def test_half_green_half_gray(self):
        px = np.empty((2, 2, 3), np.float32)
        px[0, :] = (0.0, 1.0, 0.0)
        px[1, :] = (0.4, 0.4, 0.4)
        assert gcc_image(RgbImage(px)) == pytest.approx(2 / 3, abs=1e-7)

    def test_matches_pixel_loop(self):
        rng = np.random.default_rng(2)
        img = RgbImage(rng.uniform(0, 1, (6, 5, 3)).astype(np.float32))
        looped = np.mean(
            [
                gcc_pixel(*(float(c) for c in img.pixels[i, j]))
                for i in range(6)
                for j in range(5)
            ]
        )
        assert gcc_image(img) == pytest.approx(looped, abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            img = RgbImage(rng.uniform(0, 1, (4, 4, 3)).astype(np.float32))
            assert 0.0 <= gcc_image(img) <= 1.0

    def test_green_elevation_strictly_increases(self):
        rng = np.random.default_rng(4)
        base = rng.uniform(0.1, 0.6, (4, 4, 3)).astype(np.float32)
        lifted = base.copy()
        lifted[:, :, 1] += 0.2
        assert gcc_image(RgbImage(lifted)) > gcc_image(RgbImage(base))


class TestGccStats:
    def test_two_image_group(self, tmp_path):
        # construct gcc values 0.2 and 0.6 inside one healthy class
        from PIL import Image

        d = tmp_path / "only healthy"
        d.mkdir()
        for i, g in enumerate((0.2, 0.6)):
            px = np.empty((8, 8, 3), np.float64)
            px[:, :] = ((1 - g) / 2, g, (1 - g) / 2)  # sums to 1, gcc == g
            Image.fromarray((px * 255).astype(np.uint8)).save(d / f"{i}.png")
        ds = model_io.load_dataset(tmp_path)
        rows = gcc_stats(ds, grouping="health", image_size=8)
        assert len(rows) == 1  # diseased group absent, not zero
        healthy = rows[0]
        assert healthy.group == "healthy" and healthy.n == 2
        assert healthy.mean == pytest.approx(0.4, abs=0.01)
        assert healthy.median == pytest.approx(0.4, abs=0.01)

    def test_single_image_group_degenerate_box(self, tmp_path):
        from PIL import Image

        d = tmp_path / "healthy solo"
        d.mkdir()
        Image.fromarray(np.full((8, 8, 3), 120, np.uint8)).save(d / "one.png")
        ds = model_io.load_dataset(tmp_path)
        (row,) = gcc_stats(ds, grouping="health", image_size=8)
        assert row.min == row.max == row.median == row.q1 == row.q3

    def test_healthy_exceeds_diseased_on_disk_corpus(self, tmp_path):
        root = make_disk_corpus(tmp_path / "corpus", per_class=5)
        ds = model_io.load_dataset(root)
        rows = {s.group: s for s in gcc_stats(ds, grouping="health", image_size=32)}
        assert rows["healthy"].mean > rows["diseased"].mean

    def test_background_excluded_from_health_groups(self, tmp_path):
        root = make_disk_corpus(tmp_path / "corpus", per_class=3, background=True)
        ds = model_io.load_dataset(root)
        health_rows = gcc_stats(ds, grouping="health", image_size=32)
        assert {r.group for r in health_rows} == {"healthy", "diseased"}
        assert sum(r.n for r in health_rows) == 9  # background's 3 images not counted
        class_rows = gcc_stats(ds, grouping="class", image_size=32)
        assert any(r.group == "Background without leaves" for r in class_rows)

    def test_quartile_ordering(self, tmp_path):
        root = make_disk_corpus(tmp_path / "corpus", per_class=7)
        ds = model_io.load_dataset(root)
        for row in gcc_stats(ds, grouping="class", image_size=32):
            assert row.min <= row.q1 <= row.median <= row.q3 <= row.max

    def test_csv_shape(self):
        row = chromatic.GccStats("healthy", 2, 0.4, 0.4, 0.3, 0.5, 0.2, 0.6)
        text = stats_csv([row])
        lines = text.strip().split("\n")
        assert lines[0] == "group,n,mean,median,q1,q3,min,max"
        assert lines[1].startswith("healthy,2,0.4,")
