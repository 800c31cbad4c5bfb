"""Feature fusion and the classification head.

The backbone feature vector gets the scalar green-chromaticity value
appended, then passes through a ReLU dense layer and a final linear layer
whose weights carry an L2 penalty (a max-margin style head), with softmax
over classes.  Cross entropy supports label smoothing; a multiclass hinge
loss is available behind a config flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chromatic, vit
from .errors import ConfigError, DimensionError, DomainError
from .tensor import (
    Tensor,
    add,
    clip_min,
    concat,
    log,
    mul,
    relu,
    reshape,
    softmax,
    sub,
    sum as tsum,
)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HeadConfig:
    """Classification head dimensions and regularization."""

    hidden: int = 64
    num_classes: int = 39
    l2_strength: float = 0.01
    hinge: bool = False

    def __post_init__(self):
        if self.hidden < 1 or self.num_classes < 2:
            raise ConfigError(
                f"head needs hidden >= 1 and num_classes >= 2, "
                f"got {self.hidden} and {self.num_classes}"
            )
        if self.l2_strength < 0:
            raise ConfigError(f"l2_strength must be >= 0, got {self.l2_strength}")


@dataclass
class Model:
    """Full classifier: backbone + head configs, class names, parameters."""

    vit: vit.VitConfig
    head: HeadConfig
    class_names: list = field(default_factory=list)
    params: dict = field(default_factory=dict)


def init_head_params(config: HeadConfig, in_dim: int, rng) -> dict:
    return {
        "head.fc.w": Tensor(vit.truncated_normal(rng, (in_dim, config.hidden))),
        "head.fc.b": Tensor(np.zeros(config.hidden, np.float32)),
        "head.out.w": Tensor(vit.truncated_normal(rng, (config.hidden, config.num_classes))),
        "head.out.b": Tensor(np.zeros(config.num_classes, np.float32)),
    }


def init_model(vit_cfg: vit.VitConfig, head_cfg: HeadConfig, class_names, seed=0) -> Model:
    """Seeded model initialization; same seed gives bit-identical parameters."""
    if len(class_names) != head_cfg.num_classes:
        raise ConfigError(
            f"head expects {head_cfg.num_classes} classes, "
            f"dataset provides {len(class_names)}"
        )
    rng = np.random.default_rng(seed)
    params = vit.init_vit_params(vit_cfg, rng)
    params.update(init_head_params(head_cfg, vit_cfg.projection_dim + 1, rng))
    return Model(vit=vit_cfg, head=head_cfg, class_names=list(class_names), params=params)


def fuse(feature: Tensor, gcc: float) -> Tensor:
    """Append the GCC scalar as the last coordinate of the feature vector."""
    if not 0.0 <= gcc <= 1.0:
        raise DomainError(f"gcc must lie in [0, 1], got {gcc}")
    if feature.ndim != 1:
        raise DimensionError(f"feature must be a vector, got shape {feature.shape}")
    return concat([feature, Tensor([gcc])], axis=0)


def head_logits(fused: Tensor, params, linear=vit.linear_f32) -> Tensor:
    """Pre-softmax class scores: ReLU dense then the regularized linear layer."""
    if fused.ndim != 1:
        raise DimensionError(f"fused feature must be a vector, got shape {fused.shape}")
    x = reshape(fused, (1, -1))
    hidden = relu(linear(x, params, "head.fc"))
    return reshape(linear(hidden, params, "head.out"), (-1,))


def head_forward(fused: Tensor, params, linear=vit.linear_f32) -> Tensor:
    """Class probability vector; softmax of the head logits."""
    return softmax(head_logits(fused, params, linear), axis=-1)


def loss(probs: Tensor, label: int, smoothing: float, params, head_cfg: HeadConfig) -> Tensor:
    """Label-smoothed cross entropy plus the L2 penalty on the final layer.

    Probabilities are clamped at 1e-12 before the log so a confidently wrong
    model yields a large finite loss, never NaN.
    """
    c = head_cfg.num_classes
    if not 0.0 <= smoothing < 1.0:
        raise DomainError(f"smoothing must lie in [0, 1), got {smoothing}")
    if not 0 <= label < c:
        raise DomainError(f"label {label} out of range for {c} classes")
    if probs.shape != (c,):
        raise DimensionError(f"expected {c} probabilities, got shape {probs.shape}")
    target = np.full(c, smoothing / c, np.float32)
    target[label] += np.float32(1.0 - smoothing)
    ce = mul(tsum(mul(Tensor(target), log(clip_min(probs, PROB_FLOOR)))), -1.0)
    return add(ce, _l2_penalty(params, head_cfg))


def hinge_loss(logits: Tensor, label: int, params, head_cfg: HeadConfig) -> Tensor:
    """Multiclass hinge alternative: sum_k!=y max(0, 1 - (z_y - z_k)) + L2."""
    c = head_cfg.num_classes
    if not 0 <= label < c:
        raise DomainError(f"label {label} out of range for {c} classes")
    margins = relu(add(sub(logits, logits[label]), 1.0))
    # the k == label term is exactly relu(1) == 1
    return add(sub(tsum(margins), 1.0), _l2_penalty(params, head_cfg))


def _l2_penalty(params, head_cfg: HeadConfig) -> Tensor:
    w = params["head.out.w"]
    return mul(tsum(mul(w, w)), head_cfg.l2_strength)


def forward(img, params, vit_cfg: vit.VitConfig, head_cfg: HeadConfig, linear=vit.linear_f32) -> Tensor:
    """Image -> class probabilities through backbone, fusion, and head."""
    feature = vit.encode(img, params, vit_cfg, linear)
    gcc = chromatic.gcc_image(img)
    return head_forward(fuse(feature, gcc), params, linear)


def predict(model: Model, img) -> np.ndarray:
    """Class probabilities as a plain float32 array (no gradient recording)."""
    return forward(img, model.params, model.vit, model.head).data
