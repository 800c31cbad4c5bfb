"""Shared fixtures: synthetic disk corpora and a session-scoped trained model."""

import shutil
import time
from collections import namedtuple
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

import chromavit as cv
from chromavit import model_io, training

OverfitRun = namedtuple("OverfitRun", "model history dataset seconds")

# Disk colors chosen so green chromaticity separates healthy from diseased:
# GCC ~= 0.63 (green), 0.15 (red), 0.34 (brown).
DISK_COLORS = {
    "healthy_green": (0.20, 0.65, 0.18),
    "blight_red": (0.70, 0.15, 0.12),
    "rust_brown": (0.45, 0.30, 0.12),
}

# Hyperparameters for the synthetic overfit run: the reference recipe scaled
# to desk size (2 encoder layers, 32px images, 30 images, 30 epochs).
OVERFIT_VIT = cv.VitConfig(
    image_size=32, patch_size=4, projection_dim=64, num_heads=4, num_layers=2
)
OVERFIT_HEAD = cv.HeadConfig(hidden=64, num_classes=3, l2_strength=0.01)
OVERFIT_TRAIN = cv.TrainConfig(
    batch_size=8,
    epochs=30,
    learning_rate=7e-4,
    label_smoothing=0.2,
    split_ratio=0.8,
    seed=1,
)


def make_disk_corpus(root, per_class=10, size=32, seed=7, background=False):
    """Write a colored-disk PNG corpus under ``root``, one dir per class."""
    rng = np.random.default_rng(seed)
    root = Path(root)
    if root.exists():
        shutil.rmtree(root)
    for cname, rgbc in DISK_COLORS.items():
        d = root / cname
        d.mkdir(parents=True)
        for i in range(per_class):
            img = np.full((size, size, 3), 0.55, np.float64)
            img += rng.normal(0.0, 0.01, img.shape)
            cy, cx = rng.uniform(size * 0.42, size * 0.58, 2)
            r = rng.uniform(size * 0.30, size * 0.36)
            yy, xx = np.mgrid[0:size, 0:size]
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            base = np.array(rgbc) * rng.uniform(0.95, 1.05)
            img[mask] = np.clip(base + rng.normal(0.0, 0.015, 3), 0.0, 1.0)
            img = np.clip(img, 0.0, 1.0)
            Image.fromarray((img * 255).astype(np.uint8)).save(d / f"img_{i:03d}.png")
    if background:
        d = root / "Background without leaves"
        d.mkdir()
        for i in range(per_class):
            img = rng.uniform(0.3, 0.7, (size, size, 3))
            Image.fromarray((img * 255).astype(np.uint8)).save(d / f"bg_{i:03d}.png")
    return root


@pytest.fixture(scope="session")
def disk_corpus(tmp_path_factory):
    """30-image, 3-class training corpus (10 disks per class)."""
    return make_disk_corpus(tmp_path_factory.mktemp("corpus") / "train", per_class=10)


@pytest.fixture(scope="session")
def eval_corpus(tmp_path_factory):
    """Fresh 60-image corpus from the same generator, different seed."""
    return make_disk_corpus(
        tmp_path_factory.mktemp("corpus") / "eval", per_class=20, seed=99
    )


@pytest.fixture(scope="session")
def overfit_run(disk_corpus):
    """Train the desk-scale model once; reused by training/quantize/acceptance."""
    ds = model_io.load_dataset(disk_corpus)
    start = time.perf_counter()
    model, history = training.train(
        ds, OVERFIT_VIT, OVERFIT_HEAD, OVERFIT_TRAIN, training.IDENTITY_AUGMENT
    )
    return OverfitRun(model, history, ds, time.perf_counter() - start)
