"""Command-line entry point: train, evaluate, predict, quantize, compare, gcc-stats.

Run configuration comes from a flat ``key = value`` file (``#`` comments,
no sections); command-line flags override file values, unknown keys are a
hard error, and every effective value is echoed to the run log.  Exit
codes: 0 success, 1 internal/numeric failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import chromatic, classifier, metrics, model_io, quantize, training
from .classifier import HeadConfig, Model
from .errors import (
    ChromavitError,
    ConfigError,
    ContainerError,
    DatasetError,
    DomainError,
    NumericError,
    SplitError,
)
from .quantize import QuantizedModel
from .training import AugmentConfig, TrainConfig
from .vit import VitConfig

log = logging.getLogger("chromavit")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# key -> (section, type); the single source of truth for the config grammar
CONFIG_KEYS = {
    "image_size": ("vit", int),
    "patch_size": ("vit", int),
    "projection_dim": ("vit", int),
    "num_heads": ("vit", int),
    "num_layers": ("vit", int),
    "mlp_hidden": ("vit", int),
    "head_hidden": ("head", int),
    "l2_strength": ("head", float),
    "hinge": ("head", bool),
    "batch_size": ("train", int),
    "epochs": ("train", int),
    "learning_rate": ("train", float),
    "beta1": ("train", float),
    "beta2": ("train", float),
    "adam_eps": ("train", float),
    "label_smoothing": ("train", float),
    "split_ratio": ("train", float),
    "seed": ("train", int),
    "rotation_degrees": ("augment", float),
    "width_shift": ("augment", float),
    "height_shift": ("augment", float),
    "shear": ("augment", float),
    "zoom": ("augment", float),
    "horizontal_flip": ("augment", bool),
    "vertical_flip": ("augment", bool),
    "per_channel": ("quant", bool),
}

DEFAULTS = {
    "image_size": 64,
    "patch_size": 4,
    "projection_dim": 64,
    "num_heads": 4,
    "num_layers": 8,
    "mlp_hidden": 0,
    "head_hidden": 64,
    "l2_strength": 0.01,
    "hinge": False,
    "batch_size": 32,
    "epochs": 50,
    "learning_rate": 1e-4,
    "beta1": 0.9,
    "beta2": 0.999,
    "adam_eps": 1e-7,
    "label_smoothing": 0.2,
    "split_ratio": 0.8,
    "seed": 0,
    "rotation_degrees": 25.0,
    "width_shift": 0.1,
    "height_shift": 0.1,
    "shear": 0.2,
    "zoom": 0.2,
    "horizontal_flip": True,
    "vertical_flip": True,
    "per_channel": False,
}


def _parse_value(key: str, text: str):
    kind = CONFIG_KEYS[key][1]
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r} expects a boolean, got {text!r}")
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} expects {kind.__name__}, got {text!r}") from exc


def parse_config_file(path) -> dict:
    """Read a flat key = value file; unknown keys are a hard error."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, value)
    return values


def effective_config(args) -> dict:
    """Defaults, then config file, then command-line overrides."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for override in getattr(args, "set", None) or []:
        if "=" not in override:
            raise ConfigError(f"--set expects key=value, got {override!r}")
        key, _, value = override.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} in --set")
        cfg[key] = _parse_value(key, value)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    for key in sorted(cfg):
        log.info("config %s = %s", key, cfg[key])
    return cfg


def _configs_from(cfg: dict, num_classes: int):
    vit_cfg = VitConfig(
        image_size=cfg["image_size"],
        patch_size=cfg["patch_size"],
        projection_dim=cfg["projection_dim"],
        num_heads=cfg["num_heads"],
        num_layers=cfg["num_layers"],
        mlp_hidden=cfg["mlp_hidden"],
    )
    head_cfg = HeadConfig(
        hidden=cfg["head_hidden"],
        num_classes=num_classes,
        l2_strength=cfg["l2_strength"],
        hinge=cfg["hinge"],
    )
    train_cfg = TrainConfig(
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        learning_rate=cfg["learning_rate"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        adam_eps=cfg["adam_eps"],
        label_smoothing=cfg["label_smoothing"],
        split_ratio=cfg["split_ratio"],
        seed=cfg["seed"],
    )
    aug_cfg = AugmentConfig(
        rotation_degrees=cfg["rotation_degrees"],
        width_shift=cfg["width_shift"],
        height_shift=cfg["height_shift"],
        shear=cfg["shear"],
        zoom=cfg["zoom"],
        horizontal_flip=cfg["horizontal_flip"],
        vertical_flip=cfg["vertical_flip"],
    )
    return vit_cfg, head_cfg, train_cfg, aug_cfg


def cmd_train(args) -> int:
    cfg = effective_config(args)
    ds = model_io.load_dataset(args.data)
    vit_cfg, head_cfg, train_cfg, aug_cfg = _configs_from(cfg, len(ds.class_names))
    model, history = training.train(ds, vit_cfg, head_cfg, train_cfg, aug_cfg)

    out = Path(args.out)
    model_io.save_model(model, out)
    history_path = out.with_suffix(out.suffix + ".history.csv")
    history_path.write_text(training.history_csv(history), encoding="utf-8")

    _, test_ds = training.stratified_split(ds, train_cfg.split_ratio, train_cfg.seed)
    report = training.evaluate(model, test_ds)
    report_path = out.with_suffix(out.suffix + ".eval.csv")
    report_path.write_text(metrics.report_csv(report, ds.class_names), encoding="utf-8")
    confusion_path = out.with_suffix(out.suffix + ".confusion.txt")
    confusion_path.write_text(
        metrics.render_confusion(report.confusion, ds.class_names), encoding="utf-8"
    )
    log.info("model %s, held-out accuracy %.4f", out, report.accuracy)
    print(f"saved {out} (held-out accuracy {report.accuracy:.4f})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = model_io.load_model(args.model)
    ds = model_io.load_dataset(args.data)
    if isinstance(model, QuantizedModel):
        confusion = np.zeros((model.head.num_classes,) * 2, np.int64)
        for path, label in ds.items:
            img = model_io.load_image(path, model.vit.image_size)
            pred = int(np.argmax(quantize.quantized_forward(model, img)))
            confusion[label, pred] += 1
        report = metrics.report_from_confusion(confusion)
    else:
        report = training.evaluate(model, ds)
    csv_text = metrics.report_csv(report, ds.class_names)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        print(csv_text, end="")
    print(f"accuracy {report.accuracy!r}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = model_io.load_model(args.model)
    img = model_io.load_image(args.image, model.vit.image_size)
    if isinstance(model, QuantizedModel):
        probs = quantize.quantized_forward(model, img)
    else:
        probs = classifier.predict(model, img)
    k = min(args.top, len(model.class_names))
    order = np.argsort(probs)[::-1][:k]
    for idx in order:
        print(f"{model.class_names[idx]}\t{float(probs[idx])!r}")
    return EXIT_OK


def cmd_quantize(args) -> int:
    cfg = effective_config(args)
    model = model_io.load_model(args.model)
    if isinstance(model, QuantizedModel):
        raise ConfigError(f"{args.model} is already quantized")
    qm = quantize.quantize_model(model, per_channel=cfg["per_channel"])
    model_io.save_model(qm, args.out)
    print(f"saved {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    float_model = model_io.load_model(args.float)
    qm = model_io.load_model(args.quant)
    if not isinstance(float_model, Model) or not isinstance(qm, QuantizedModel):
        raise ConfigError("--float must name a float container and --quant a quantized one")
    ds = model_io.load_dataset(args.data)
    report = quantize.compare(float_model, qm, ds)
    if args.out:
        Path(args.out).write_text(quantize.quant_report_csv(report), encoding="utf-8")
    print(
        f"accuracy: float {report.float_accuracy:.4f} -> quantized "
        f"{report.quant_accuracy:.4f} (delta {report.accuracy_delta:+.4f})\n"
        f"top-1 agreement: {report.top1_agreement:.4f} over {len(ds.items)} images\n"
        f"size: {report.float_bytes} -> {report.quant_bytes} bytes "
        f"({report.size_ratio:.2f}x smaller)"
    )
    return EXIT_OK


def cmd_gcc_stats(args) -> int:
    cfg = effective_config(args)
    ds = model_io.load_dataset(args.data)
    rows = chromatic.gcc_stats(ds, grouping="health", image_size=cfg["image_size"])
    rows += chromatic.gcc_stats(ds, grouping="class", image_size=cfg["image_size"])
    csv_text = chromatic.stats_csv(rows)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        print(csv_text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chromavit",
        description="Train, evaluate, and quantize the chromatic-feature ViT classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("train", help="train a model on a class-per-directory tree")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--out", required=True, help="output model container path")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the report CSV here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("quantize", help="post-training int8 quantization")
    p.add_argument("--model", required=True, help="float model container")
    p.add_argument("--out", required=True, help="quantized container path")
    common(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("compare", help="paired float-vs-quantized evaluation")
    p.add_argument("--float", required=True)
    p.add_argument("--quant", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the comparison CSV here as well")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gcc-stats", help="green-chromaticity box statistics per group")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the CSV here instead of stdout")
    common(p)
    p.set_defaults(func=cmd_gcc_stats)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ContainerError, DomainError, SplitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ChromavitError as exc:
        print(f"internal failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
