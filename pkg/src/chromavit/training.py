"""Stratified splitting, augmentation, Adam, and the training loop.

The numeric path is single-threaded and fully deterministic given the seed:
epoch shuffles, augmentation draws, and parameter initialization all come
from one seeded generator, so two runs with the same seed, config, and data
produce bit-identical parameters and history.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import classifier, model_io
from .chromatic import RgbImage
from .classifier import HeadConfig, Model
from .errors import ConfigError, NumericError, SplitError
from .metrics import EvalReport, report_from_confusion
from .tensor import GradTape, Tensor
from .vit import VitConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentConfig:
    """Geometric augmentation ranges; the default is the full recipe."""

    rotation_degrees: float = 25.0
    width_shift: float = 0.1
    height_shift: float = 0.1
    shear: float = 0.2
    zoom: float = 0.2
    horizontal_flip: bool = True
    vertical_flip: bool = True

    def __post_init__(self):
        for name in ("rotation_degrees", "width_shift", "height_shift", "shear", "zoom"):
            if getattr(self, name) < 0:
                raise ConfigError(f"augmentation range {name} must be >= 0")


IDENTITY_AUGMENT = AugmentConfig(
    rotation_degrees=0.0,
    width_shift=0.0,
    height_shift=0.0,
    shear=0.0,
    zoom=0.0,
    horizontal_flip=False,
    vertical_flip=False,
)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; defaults follow the reference recipe."""

    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-7
    label_smoothing: float = 0.2
    split_ratio: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")


def stratified_split(ds, ratio: float, seed: int):
    """Per-class split: ceil(ratio * n_c) items to train, the rest to test.

    The within-class shuffle is seeded, so the same seed always produces
    the same partition.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    by_class = {i: [] for i in range(len(ds.class_names))}
    for item in ds.items:
        by_class[item[1]].append(item)
    rng = np.random.default_rng(seed)
    train_items, test_items = [], []
    for label in range(len(ds.class_names)):
        members = by_class[label]
        if len(members) < 2:
            raise SplitError(
                f"class {ds.class_names[label]!r} has {len(members)} item(s), "
                "need at least 2 to split"
            )
        order = rng.permutation(len(members))
        n_train = math.ceil(ratio * len(members))
        train_items.extend(members[i] for i in order[:n_train])
        test_items.extend(members[i] for i in order[n_train:])
    make = type(ds)
    return (
        make(items=train_items, class_names=list(ds.class_names)),
        make(items=test_items, class_names=list(ds.class_names)),
    )


def apply_geometric(px: np.ndarray, angle=0.0, shift_rows=0.0, shift_cols=0.0,
                    shear=0.0, zoom=1.0) -> np.ndarray:
    """One combined affine resample: rotate, shift, shear, zoom, in that order.

    Transforms compose about the image center; out-of-frame samples
    replicate the nearest edge pixel.  Shifts are in pixels (rows, cols);
    the shear factor mixes column position into the row coordinate.
    """
    if angle == 0.0 and shift_rows == 0.0 and shift_cols == 0.0 and shear == 0.0 and zoom == 1.0:
        return px.copy()
    h, w = px.shape[:2]
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    theta = math.radians(angle)
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    sh = np.array([[1.0, shear], [0.0, 1.0]])
    zm = np.array([[zoom, 0.0], [0.0, zoom]])
    fwd = zm @ sh @ rot
    offset_vec = zm @ sh @ np.array([shift_rows, shift_cols]) + center
    inv = np.linalg.inv(fwd)
    # output[p] = input[inv @ p + offset]
    offset = center - inv @ offset_vec
    out = np.empty_like(px)
    for ch in range(px.shape[2]):
        out[:, :, ch] = ndimage.affine_transform(
            px[:, :, ch], inv, offset=offset, order=1, mode="nearest"
        )
    return out


def augment(img: RgbImage, cfg: AugmentConfig, rng) -> RgbImage:
    """One random augmentation draw; identity config returns the input bits.

    Draw order is fixed: angle, width shift, height shift, shear, zoom,
    then the flip coins (only when the corresponding flip is enabled).
    """
    px = img.pixels
    h, w = px.shape[:2]
    angle = float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))
    shift_cols = float(rng.uniform(-cfg.width_shift, cfg.width_shift)) * w
    shift_rows = float(rng.uniform(-cfg.height_shift, cfg.height_shift)) * h
    shear = float(rng.uniform(-cfg.shear, cfg.shear))
    zoom = 1.0 + float(rng.uniform(-cfg.zoom, cfg.zoom))
    identity = (angle == 0.0 and shift_cols == 0.0 and shift_rows == 0.0
                and shear == 0.0 and zoom == 1.0)
    out = px if identity else np.clip(
        apply_geometric(px, angle, shift_rows, shift_cols, shear, zoom), 0.0, 1.0
    )
    if cfg.horizontal_flip and rng.random() < 0.5:
        out = out[:, ::-1]
    if cfg.vertical_flip and rng.random() < 0.5:
        out = out[::-1]
    return RgbImage(np.ascontiguousarray(out, np.float32))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_adam_state(params) -> AdamState:
    return AdamState(
        m={name: np.zeros(p.shape, np.float32) for name, p in params.items()},
        v={name: np.zeros(p.shape, np.float32) for name, p in params.items()},
    )


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One Adam update with bias correction; returns (new params, state).

    Aborts with diagnostics if any gradient is non-finite.
    """
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_params = {}
    for name, p in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise NumericError(
                f"non-finite gradient at step {t} for {name!r}, max |g| = {np.abs(g).max()}"
            )
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        update = cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.adam_eps)
        new_params[name] = Tensor._wrap(p.data - update)
    return new_params, state


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def history_csv(history) -> str:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for e in history:
        lines.append(
            f"{e.epoch},{e.train_loss!r},{e.train_acc!r},{e.val_loss!r},{e.val_acc!r}"
        )
    return "\n".join(lines) + "\n"


def _eval_pass(model: Model, ds, smoothing: float):
    """Mean loss and accuracy over a dataset, no augmentation, no tape."""
    total_loss = 0.0
    correct = 0
    for path, label in ds.items:
        img = model_io.load_image(path, model.vit.image_size)
        probs = classifier.forward(img, model.params, model.vit, model.head)
        sample = classifier.loss(probs, label, smoothing, model.params, model.head)
        total_loss += sample.item()
        correct += int(np.argmax(probs.data)) == label
    n = max(len(ds.items), 1)
    return total_loss / n, correct / n


def train(ds, vit_cfg: VitConfig, head_cfg: HeadConfig, train_cfg: TrainConfig,
          aug_cfg: AugmentConfig | None = None):
    """Joint training of backbone and head; returns (model, history).

    The dataset is stratified-split into train and held-out parts using
    ``train_cfg.split_ratio``; history carries per-epoch loss/accuracy on
    both.
    """
    if len(ds.class_names) != head_cfg.num_classes:
        raise ConfigError(
            f"dataset has {len(ds.class_names)} classes but head expects "
            f"{head_cfg.num_classes}"
        )
    if not ds.items:
        raise ConfigError("cannot train on an empty dataset")
    if aug_cfg is None:
        aug_cfg = AugmentConfig()

    train_ds, val_ds = stratified_split(ds, train_cfg.split_ratio, train_cfg.seed)
    model = classifier.init_model(vit_cfg, head_cfg, ds.class_names, seed=train_cfg.seed)
    state = init_adam_state(model.params)
    rng = np.random.default_rng(train_cfg.seed)
    smoothing = train_cfg.label_smoothing

    history = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(train_ds.items))
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [train_ds.items[i] for i in order[start : start + train_cfg.batch_size]]
            grad_sum = None
            for path, label in batch:
                img = model_io.load_image(path, vit_cfg.image_size)
                img = augment(img, aug_cfg, rng)
                with GradTape() as tape:
                    probs = classifier.forward(img, model.params, vit_cfg, head_cfg)
                    sample_loss = classifier.loss(
                        probs, label, smoothing, model.params, head_cfg
                    )
                grads = tape.gradients(sample_loss, model.params)
                epoch_loss += sample_loss.item()
                epoch_correct += int(np.argmax(probs.data)) == label
                if grad_sum is None:
                    grad_sum = grads
                else:
                    for name in grad_sum:
                        grad_sum[name] += grads[name]
            inv = np.float32(1.0 / len(batch))
            mean_grads = {name: g * inv for name, g in grad_sum.items()}
            model.params, state = adam_step(model.params, mean_grads, state, train_cfg)
        val_loss, val_acc = _eval_pass(model, val_ds, smoothing)
        stats = EpochStats(
            epoch=epoch,
            train_loss=epoch_loss / len(train_ds.items),
            train_acc=epoch_correct / len(train_ds.items),
            val_loss=val_loss,
            val_acc=val_acc,
        )
        history.append(stats)
        log.info(
            "epoch %d/%d loss %.4f acc %.3f val_loss %.4f val_acc %.3f",
            epoch, train_cfg.epochs, stats.train_loss, stats.train_acc,
            stats.val_loss, stats.val_acc,
        )
    return model, history


def evaluate(model: Model, ds) -> EvalReport:
    """Confusion matrix and metrics from argmax predictions on a dataset."""
    if len(ds.class_names) != model.head.num_classes:
        raise ConfigError(
            f"model has {model.head.num_classes} classes, dataset has "
            f"{len(ds.class_names)}"
        )
    c = model.head.num_classes
    confusion = np.zeros((c, c), np.int64)
    for path, label in ds.items:
        img = model_io.load_image(path, model.vit.image_size)
        pred = int(np.argmax(classifier.predict(model, img)))
        confusion[label, pred] += 1
    return report_from_confusion(confusion)
