"""End-to-end training on a generated colored-disk corpus.

Writes a 3-class PNG tree (green / red / brown disks), trains the small
backbone + head jointly, and prints the history and held-out evaluation.
Artifacts land in ./demo_output/.
"""

from pathlib import Path

import numpy as np
from PIL import Image

import chromavit as cv
from chromavit import metrics, model_io, training

OUT = Path(__file__).resolve().parent.parent / "demo_output"
DATA = OUT / "disks"

COLORS = {
    "healthy_green": (0.20, 0.65, 0.18),
    "blight_red": (0.70, 0.15, 0.12),
    "rust_brown": (0.45, 0.30, 0.12),
}


def write_corpus(per_class=10, size=32, seed=7):
    rng = np.random.default_rng(seed)
    for cname, color in COLORS.items():
        d = DATA / cname
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            img = np.full((size, size, 3), 0.55) + rng.normal(0, 0.01, (size, size, 3))
            cy, cx = rng.uniform(size * 0.42, size * 0.58, 2)
            radius = rng.uniform(size * 0.30, size * 0.36)
            yy, xx = np.mgrid[0:size, 0:size]
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
            img[mask] = np.clip(np.array(color) * rng.uniform(0.95, 1.05)
                                + rng.normal(0, 0.015, 3), 0, 1)
            Image.fromarray((np.clip(img, 0, 1) * 255).astype(np.uint8)).save(
                d / f"img_{i:03d}.png"
            )


print("== generating the corpus ==")
write_corpus()
ds = model_io.load_dataset(DATA)
print(f"{len(ds.items)} images across {ds.class_names}")

print()
print("== training (2 encoder layers, 32px, 30 epochs) ==")
vit_cfg = cv.VitConfig(image_size=32, patch_size=4, projection_dim=64,
                       num_heads=4, num_layers=2)
head_cfg = cv.HeadConfig(hidden=64, num_classes=3)
train_cfg = cv.TrainConfig(batch_size=8, epochs=30, learning_rate=7e-4, seed=1)
model, history = training.train(ds, vit_cfg, head_cfg, train_cfg,
                                training.IDENTITY_AUGMENT)
for e in history[::6] + [history[-1]]:
    print(f"epoch {e.epoch:2d}: loss {e.train_loss:.4f} acc {e.train_acc:.3f} "
          f"| val loss {e.val_loss:.4f} acc {e.val_acc:.3f}")

print()
print("== held-out evaluation ==")
_, test_ds = training.stratified_split(ds, train_cfg.split_ratio, train_cfg.seed)
report = training.evaluate(model, test_ds)
print(metrics.render_confusion(report.confusion, ds.class_names))
print(f"accuracy {report.accuracy:.3f}, macro F1 {report.macro_f1:.3f}")

model_path = OUT / "disks_model.gvsm"
model_io.save_model(model, model_path)
(OUT / "disks_history.csv").write_text(training.history_csv(history))
print(f"saved {model_path}")
