"""Split, augmentation, Adam, metrics, and a small end-to-end training smoke."""

import numpy as np
import pytest

import chromavit as cv
from chromavit import metrics, model_io, training
from chromavit.chromatic import RgbImage
from chromavit.errors import ConfigError, NumericError, SplitError
from chromavit.metrics import report_from_confusion
from chromavit.model_io import Dataset
from chromavit.tensor import Tensor
from chromavit.training import (
    AugmentConfig,
    IDENTITY_AUGMENT,
    adam_step,
    apply_geometric,
    augment,
    init_adam_state,
    stratified_split,
)

from conftest import make_disk_corpus

# Per-class sample counts of the 39-class reference corpus layout.
REFERENCE_COUNTS = [
    1000, 1000, 1000, 1645, 1143, 1502, 1000, 1052, 1000, 1192, 1162, 1000,
    1180, 1383, 1000, 1076, 5507, 2297, 1000, 1000, 1478, 1000, 1000, 1000,
    1000, 5090, 1835, 1000, 1109, 2127, 1000, 1591, 1909, 1000, 1771, 1676,
    1404, 1000, 5357,
]


def fake_dataset(counts):
    items = []
    for label, n in enumerate(counts):
        items.extend((f"class{label}/img{i}.png", label) for i in range(n))
    return Dataset(items=items, class_names=[f"class{label}" for label in range(len(counts))])


class TestStratifiedSplit:
    def test_ten_items_ratio_08(self):
        train, test = stratified_split(fake_dataset([10]), 0.8, seed=0)
        assert len(train.items) == 8 and len(test.items) == 2

    def test_partition_is_exact(self):
        ds = fake_dataset([10, 7, 23])
        train, test = stratified_split(ds, 0.8, seed=1)
        combined = sorted(train.items + test.items)
        assert combined == sorted(ds.items)
        assert not set(train.items) & set(test.items)

    def test_per_class_fraction_bound(self):
        rng = np.random.default_rng(2)
        counts = [int(rng.integers(2, 200)) for _ in range(12)]
        ds = fake_dataset(counts)
        train, _ = stratified_split(ds, 0.8, seed=2)
        for label, n in enumerate(counts):
            frac = sum(1 for _, l in train.items if l == label) / n
            assert abs(frac - 0.8) <= 1.0 / n + 1e-12

    def test_reference_counts_all_classes_in_both_splits(self):
        ds = fake_dataset(REFERENCE_COUNTS)
        train, test = stratified_split(ds, 0.8, seed=3)
        train_labels = {l for _, l in train.items}
        test_labels = {l for _, l in test.items}
        assert train_labels == test_labels == set(range(39))

    def test_determinism(self):
        ds = fake_dataset([10, 20, 5])
        a = stratified_split(ds, 0.8, seed=7)
        b = stratified_split(ds, 0.8, seed=7)
        assert a[0].items == b[0].items and a[1].items == b[1].items

    def test_single_item_class_rejected_by_name(self):
        ds = fake_dataset([5, 1])
        with pytest.raises(SplitError, match="class1"):
            stratified_split(ds, 0.8, seed=0)


def rand_image(size=8, seed=0):
    return RgbImage(np.random.default_rng(seed).uniform(0, 1, (size, size, 3)).astype(np.float32))


class TestAugment:
    def test_identity_config_bit_exact(self):
        img = rand_image(8, seed=1)
        out = augment(img, IDENTITY_AUGMENT, np.random.default_rng(0))
        np.testing.assert_array_equal(out.pixels, img.pixels)

    def test_180_degree_rotation_permutes_pixels(self):
        # hand-computed map: (i, j) -> (H-1-i, W-1-j)
        px = (np.arange(12, dtype=np.float32) / 12.0).reshape(2, 2, 3)
        rotated = apply_geometric(px, angle=180.0)
        np.testing.assert_allclose(rotated, px[::-1, ::-1], atol=1e-6)

    def test_pixel_bounds_hold_under_random_draws(self):
        rng = np.random.default_rng(3)
        img = rand_image(8, seed=3)
        cfg = AugmentConfig()
        for _ in range(1000):
            out = augment(img, cfg, rng)
            assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_dimensions_never_change(self):
        rng = np.random.default_rng(4)
        img = rand_image(12, seed=4)
        for _ in range(50):
            out = augment(img, AugmentConfig(), rng)
            assert out.pixels.shape == img.pixels.shape

    def test_flips_exact(self):
        img = rand_image(6, seed=5)
        cfg = AugmentConfig(rotation_degrees=0, width_shift=0, height_shift=0,
                            shear=0, zoom=0, horizontal_flip=True, vertical_flip=False)
        rng = np.random.default_rng(1)
        outputs = {augment(img, cfg, rng).pixels.tobytes() for _ in range(16)}
        assert outputs == {img.pixels.tobytes(), img.pixels[:, ::-1].tobytes()}

    def test_zoom_direction(self):
        # zoom > 1 enlarges the center: a centered bright spot grows
        px = np.zeros((9, 9, 3), np.float32)
        px[4, 4] = 1.0
        zoomed = apply_geometric(px, zoom=3.0)
        assert zoomed.sum() > px.sum()

    def test_negative_range_rejected(self):
        with pytest.raises(ConfigError):
            AugmentConfig(rotation_degrees=-1.0)

    def test_seeded_determinism(self):
        img = rand_image(8, seed=6)
        a = augment(img, AugmentConfig(), np.random.default_rng(42)).pixels
        b = augment(img, AugmentConfig(), np.random.default_rng(42)).pixels
        np.testing.assert_array_equal(a, b)


class TestAdam:
    CFG = cv.TrainConfig(batch_size=1, epochs=1, learning_rate=1e-2)

    def test_zero_gradient_leaves_params(self):
        params = {"w": Tensor([1.0, -2.0])}
        state = init_adam_state(params)
        grads = {"w": np.zeros(2, np.float32)}
        new, state = adam_step(params, grads, state, self.CFG)
        np.testing.assert_array_equal(new["w"].data, params["w"].data)
        assert state.t == 1
        assert (state.m["w"] == 0).all() and (state.v["w"] == 0).all()

    def test_first_step_magnitude_is_learning_rate(self):
        # bias-corrected m/sqrt(v) at t=1 is g/|g|, so |update| ~ lr
        params = {"w": Tensor([0.0, 0.0, 0.0])}
        state = init_adam_state(params)
        grads = {"w": np.array([0.5, -1.5, 3.0], np.float32)}
        new, _ = adam_step(params, grads, state, self.CFG)
        np.testing.assert_allclose(np.abs(new["w"].data), np.full(3, 1e-2), rtol=1e-3)

    def test_quadratic_bowl_converges_monotonically(self):
        params = {"theta": Tensor(np.full(5, 1.0, np.float32))}
        state = init_adam_state(params)
        norms = []
        for _ in range(200):
            grads = {"theta": 2.0 * params["theta"].data}
            params, state = adam_step(params, grads, state, self.CFG)
            norms.append(float(np.linalg.norm(params["theta"].data)))
        warmup = 5
        diffs = np.diff(norms[warmup:])
        assert (diffs < 0).all()
        assert norms[-1] < 0.1

    def test_non_finite_gradient_aborts_with_diagnostics(self):
        params = {"w": Tensor([1.0])}
        state = init_adam_state(params)
        grads = {"w": np.array([np.nan], np.float32)}
        with pytest.raises(NumericError, match=r"step 1.*'w'"):
            adam_step(params, grads, state, self.CFG)


class TestMetrics:
    def test_perfect_predictor(self):
        report = report_from_confusion(np.diag([5, 3, 7]))
        assert report.accuracy == 1.0
        for c in report.per_class:
            assert c.precision == c.recall == c.f1 == c.accuracy == 1.0

    def test_hand_computed_two_class(self):
        report = report_from_confusion([[8, 2], [1, 9]])
        c0 = report.per_class[0]
        assert c0.precision == pytest.approx(8 / 9, abs=1e-12)
        assert c0.recall == pytest.approx(0.8, abs=1e-12)
        assert c0.f1 == pytest.approx(2 * (8 / 9) * 0.8 / (8 / 9 + 0.8), abs=1e-12)
        assert report.accuracy == pytest.approx(17 / 20, abs=1e-12)

    def test_all_predictions_one_class(self):
        report = report_from_confusion([[4, 0, 0], [3, 0, 0], [2, 0, 0]])
        assert report.per_class[0].recall == 1.0
        assert report.per_class[1].recall == 0.0
        assert report.per_class[2].recall == 0.0
        assert report.per_class[1].zero_division  # no predictions for class 1

    def test_micro_accuracy_is_trace_over_total(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = rng.integers(0, 30, (4, 4))
            if m.sum() == 0:
                continue
            report = report_from_confusion(m)
            assert report.accuracy == pytest.approx(np.trace(m) / m.sum(), abs=1e-12)

    def test_f1_between_precision_and_recall(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            m = rng.integers(0, 30, (5, 5))
            report = report_from_confusion(m)
            for c in report.per_class:
                if not c.zero_division:
                    assert min(c.precision, c.recall) - 1e-12 <= c.f1 <= max(c.precision, c.recall) + 1e-12

    def test_csv_includes_macro_row(self):
        report = report_from_confusion([[3, 1], [0, 4]])
        text = metrics.report_csv(report, ["a", "b"])
        assert text.splitlines()[0].startswith("class,support,precision")
        assert text.splitlines()[-1].startswith("macro,")

    def test_render_confusion_mentions_names(self):
        text = metrics.render_confusion(np.array([[3, 1], [0, 4]]), ["alpha", "beta"])
        assert "alpha" in text and "true\\pred" in text


class TestTrainLoop:
    def test_smoke_and_determinism(self, tmp_path):
        root = make_disk_corpus(tmp_path / "mini", per_class=4, size=16, seed=11)
        ds = model_io.load_dataset(root)
        vit_cfg = cv.VitConfig(image_size=16, patch_size=4, projection_dim=16,
                               num_heads=2, num_layers=1)
        head_cfg = cv.HeadConfig(hidden=16, num_classes=3)
        tc = cv.TrainConfig(batch_size=4, epochs=2, learning_rate=1e-3, seed=9)

        model_a, hist_a = training.train(ds, vit_cfg, head_cfg, tc, IDENTITY_AUGMENT)
        model_b, hist_b = training.train(ds, vit_cfg, head_cfg, tc, IDENTITY_AUGMENT)
        assert len(hist_a) == 2
        assert hist_a == hist_b
        for name in model_a.params:
            np.testing.assert_array_equal(model_a.params[name].data, model_b.params[name].data)

    def test_class_count_mismatch(self, tmp_path):
        root = make_disk_corpus(tmp_path / "mini2", per_class=2, size=16, seed=12)
        ds = model_io.load_dataset(root)
        vit_cfg = cv.VitConfig(image_size=16, patch_size=4, projection_dim=16,
                               num_heads=2, num_layers=1)
        with pytest.raises(ConfigError):
            training.train(ds, vit_cfg, cv.HeadConfig(hidden=8, num_classes=5),
                           cv.TrainConfig(epochs=1))

    def test_history_csv_format(self):
        rows = [training.EpochStats(1, 1.0, 0.5, 1.1, 0.4)]
        text = training.history_csv(rows)
        assert text.splitlines()[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
        assert text.splitlines()[1] == "1,1.0,0.5,1.1,0.4"

    def test_evaluate_on_trained_model(self, overfit_run):
        model, history, ds, _ = overfit_run
        _, test_ds = training.stratified_split(ds, 0.8, seed=1)
        report = training.evaluate(model, test_ds)
        assert report.confusion.sum() == len(test_ds.items)
        assert 0.0 <= report.accuracy <= 1.0

    def test_evaluate_class_mismatch(self, overfit_run, tmp_path):
        model = overfit_run.model
        ds = Dataset(items=[("x.png", 0)], class_names=["only_one", "two"])
        with pytest.raises(ConfigError):
            training.evaluate(model, ds)
