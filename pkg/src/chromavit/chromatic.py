"""RGB channel decomposition and green-chromaticity (GCC) features.

The green chromatic coordinate of a pixel is G / (R + G + B), a scale-free
greenness ratio.  The per-image feature is the spatial mean of the
per-pixel values.  Chromaticity math runs in float64 so the ratio's scale
invariance holds to tight tolerance regardless of pixel encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .tensor import Tensor

ACHROMATIC = 1.0 / 3.0

# Class-name conventions for the healthy/diseased grouping: names containing
# "healthy" are healthy, background classes belong to neither group.
_HEALTHY_MARK = "healthy"
_BACKGROUND_MARK = "background"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """H x W x 3 float32 pixel grid, channel order R, G, B, values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"expected H x W x 3 pixels, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DomainError("image contains non-finite pixel values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DomainError(
                f"pixel values must lie in [0, 1], got range "
                f"[{arr.min():.6g}, {arr.max():.6g}]"
            )
        if arr is self.pixels and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def split_channels(img: RgbImage):
    """Split an image into its R, G, B planes as H x W tensors."""
    px = img.pixels
    return (
        Tensor(px[:, :, 0]),
        Tensor(px[:, :, 1]),
        Tensor(px[:, :, 2]),
    )


def merge_channels(r: Tensor, g: Tensor, b: Tensor) -> RgbImage:
    """Reassemble channel planes into an image; inverse of split_channels."""
    if not (r.shape == g.shape == b.shape) or r.ndim != 2:
        raise DimensionError(
            f"channel planes must share an H x W shape, got {r.shape}, {g.shape}, {b.shape}"
        )
    return RgbImage(np.stack([r.data, g.data, b.data], axis=-1))


def gcc_pixel(r: float, g: float, b: float) -> float:
    """Green chromatic coordinate g / (r + g + b) of one pixel.

    A black pixel (zero sum) maps to the neutral chromaticity 1/3.
    """
    if r < 0 or g < 0 or b < 0:
        raise DomainError(f"channel values must be non-negative, got ({r}, {g}, {b})")
    total = float(r) + float(g) + float(b)
    if total == 0.0:
        return ACHROMATIC
    return float(g) / total


def gcc_image(img: RgbImage) -> float:
    """Mean green chromatic coordinate over all pixels; always in [0, 1]."""
    px = img.pixels.astype(np.float64)
    total = px.sum(axis=-1)
    green = px[:, :, 1]
    ratio = np.where(total == 0.0, ACHROMATIC, green / np.where(total == 0.0, 1.0, total))
    return float(ratio.mean())


def class_health(name: str):
    """Map a class name to True (healthy), False (diseased), or None (excluded)."""
    low = name.lower()
    if _BACKGROUND_MARK in low:
        return None
    return _HEALTHY_MARK in low


@dataclass(frozen=True)
class GccStats:
    """Box-plot statistics of per-image GCC values for one group."""

    group: str
    n: int
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float


def _stats_for(group: str, values) -> GccStats:
    arr = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
    return GccStats(
        group=group,
        n=int(arr.size),
        mean=float(arr.mean()),
        median=float(med),
        q1=float(q1),
        q3=float(q3),
        min=float(arr.min()),
        max=float(arr.max()),
    )


def gcc_stats(dataset, grouping="health", image_size=64):
    """Per-group GCC statistics over a dataset.

    ``grouping`` is "health" for healthy/diseased rows or "class" for one
    row per class.  Groups with no images are omitted rather than reported
    as zeros.
    """
    from .model_io import load_image  # late import: model_io builds RgbImage

    if grouping not in ("health", "class"):
        raise DomainError(f"unknown grouping {grouping!r}")
    per_image = []
    for path, label in dataset.items:
        img = load_image(path, image_size)
        per_image.append((gcc_image(img), dataset.class_names[label]))

    rows = []
    if grouping == "health":
        for group, flag in (("healthy", True), ("diseased", False)):
            vals = [v for v, name in per_image if class_health(name) is flag]
            if vals:
                rows.append(_stats_for(group, vals))
    else:
        for name in dataset.class_names:
            vals = [v for v, cname in per_image if cname == name]
            if vals:
                rows.append(_stats_for(name, vals))
    return rows


def stats_csv(rows) -> str:
    """Render GccStats rows as CSV with a fixed column order."""
    lines = ["group,n,mean,median,q1,q3,min,max"]
    for s in rows:
        lines.append(
            f"{s.group},{s.n},{s.mean!r},{s.median!r},{s.q1!r},{s.q3!r},{s.min!r},{s.max!r}"
        )
    return "\n".join(lines) + "\n"
