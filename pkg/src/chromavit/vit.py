"""Vision-transformer feature extractor.

An image is cut into non-overlapping patches, each patch linearly projected
to the embedding width, a learnable class token is prepended, learned
positional embeddings are added, and the token matrix runs through a stack
of pre-norm encoder blocks (multi-head self-attention + GELU MLP, residual
after each).  The final class-token state is the image feature.

Forward functions accept a ``linear`` strategy so the same code path serves
the float32 model and the int8 inference path: ``linear(x, params, name)``
must compute ``x @ W + b`` for the named projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import (
    Tensor,
    add,
    concat,
    gelu,
    layer_norm,
    matmul,
    mul,
    softmax,
    transpose,
)


@dataclass(frozen=True)
class VitConfig:
    """Backbone dimensions.  Defaults are the small desk-scale setup."""

    image_size: int = 64
    patch_size: int = 4
    projection_dim: int = 64
    num_heads: int = 4
    num_layers: int = 8
    mlp_hidden: int = 0  # 0 means 2 * projection_dim

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.projection_dim % self.num_heads != 0:
            raise ConfigError(
                f"projection_dim {self.projection_dim} not divisible by "
                f"num_heads {self.num_heads}"
            )
        if self.mlp_hidden == 0:
            object.__setattr__(self, "mlp_hidden", 2 * self.projection_dim)

    @property
    def num_patches(self):
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * 3

    @property
    def num_tokens(self):
        return self.num_patches + 1

    @property
    def head_dim(self):
        return self.projection_dim // self.num_heads


def truncated_normal(rng, shape, std=0.02):
    """Normal(0, std) samples redrawn until within two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(np.float32)


def init_vit_params(config: VitConfig, rng) -> dict:
    """Fresh backbone parameters keyed by hierarchical name."""
    d = config.projection_dim
    params = {
        "vit.proj.w": Tensor(truncated_normal(rng, (config.patch_dim, d))),
        "vit.proj.b": Tensor(np.zeros(d, np.float32)),
        "vit.cls": Tensor(truncated_normal(rng, (1, d))),
        "vit.pos": Tensor(truncated_normal(rng, (config.num_tokens, d))),
    }
    for i in range(config.num_layers):
        p = f"vit.layers.{i}"
        params[f"{p}.ln1.g"] = Tensor(np.ones(d, np.float32))
        params[f"{p}.ln1.b"] = Tensor(np.zeros(d, np.float32))
        for proj in ("wq", "wk", "wv", "wo"):
            params[f"{p}.attn.{proj}.w"] = Tensor(truncated_normal(rng, (d, d)))
            params[f"{p}.attn.{proj}.b"] = Tensor(np.zeros(d, np.float32))
        params[f"{p}.ln2.g"] = Tensor(np.ones(d, np.float32))
        params[f"{p}.ln2.b"] = Tensor(np.zeros(d, np.float32))
        params[f"{p}.mlp.fc1.w"] = Tensor(truncated_normal(rng, (d, config.mlp_hidden)))
        params[f"{p}.mlp.fc1.b"] = Tensor(np.zeros(config.mlp_hidden, np.float32))
        params[f"{p}.mlp.fc2.w"] = Tensor(truncated_normal(rng, (config.mlp_hidden, d)))
        params[f"{p}.mlp.fc2.b"] = Tensor(np.zeros(d, np.float32))
    params["vit.final_ln.g"] = Tensor(np.ones(d, np.float32))
    params["vit.final_ln.b"] = Tensor(np.zeros(d, np.float32))
    return params


def linear_f32(x, params, name):
    """Float path for the injectable projection strategy: x @ W + b."""
    return add(matmul(x, params[name + ".w"]), params[name + ".b"])


def patchify(img, patch_size: int) -> Tensor:
    """Cut an image into flattened non-overlapping patches.

    Patches are ordered row-major over the patch grid; within a patch,
    pixels are row-major with the three channels interleaved per pixel.
    """
    px = getattr(img, "pixels", None)
    if px is None:
        px = np.asarray(img, np.float32)
    if px.ndim != 3 or px.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 image, got shape {px.shape}")
    h, w, c = px.shape
    if h % patch_size != 0 or w % patch_size != 0:
        raise DimensionError(
            f"image {h}x{w} not divisible into {patch_size}x{patch_size} patches"
        )
    gh, gw = h // patch_size, w // patch_size
    tiles = px.reshape(gh, patch_size, gw, patch_size, c)
    tiles = tiles.transpose(0, 2, 1, 3, 4).reshape(gh * gw, patch_size * patch_size * c)
    return Tensor(tiles)


def embed(patches: Tensor, params, linear=linear_f32) -> Tensor:
    """Project patches, prepend the class token, add positional embeddings."""
    if patches.ndim != 2:
        raise DimensionError(f"expected a patch matrix, got shape {patches.shape}")
    projected = linear(patches, params, "vit.proj")  # (P, D)
    tokens = concat([params["vit.cls"], projected], axis=0)  # (P+1, D)
    pos = params["vit.pos"]
    if pos.shape != tokens.shape:
        raise DimensionError(
            f"positional table {pos.shape} does not cover {tokens.shape[0]} tokens"
        )
    return add(tokens, pos)


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """Row-stochastic attention matrix softmax(Q K^T / sqrt(d_k))."""
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise DimensionError(f"query {q.shape} and key {k.shape} disagree on depth")
    scale = 1.0 / math.sqrt(q.shape[1])
    return softmax(mul(matmul(q, transpose(k)), scale), axis=-1)


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention."""
    if k.shape[0] != v.shape[0]:
        raise DimensionError(f"key rows {k.shape} and value rows {v.shape} disagree")
    return matmul(attention_weights(q, k), v)


def msa(z: Tensor, params, prefix: str, num_heads: int, linear=linear_f32) -> Tensor:
    """Multi-head self-attention with output projection; shape-preserving."""
    n, d = z.shape
    if d % num_heads != 0:
        raise ConfigError(f"token width {d} not divisible by {num_heads} heads")
    q = linear(z, params, f"{prefix}.attn.wq")
    k = linear(z, params, f"{prefix}.attn.wk")
    v = linear(z, params, f"{prefix}.attn.wv")
    dh = d // num_heads
    heads = []
    for h in range(num_heads):
        cols = (slice(None), slice(h * dh, (h + 1) * dh))
        heads.append(attention(q[cols], k[cols], v[cols]))
    merged = heads[0] if num_heads == 1 else concat(heads, axis=1)
    return linear(merged, params, f"{prefix}.attn.wo")


def encoder_block(z: Tensor, params, prefix: str, num_heads: int, linear=linear_f32) -> Tensor:
    """Pre-norm transformer block: residual MSA then residual GELU MLP."""
    attended = msa(
        layer_norm(z, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"]),
        params,
        prefix,
        num_heads,
        linear,
    )
    z = add(z, attended)
    normed = layer_norm(z, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    hidden = gelu(linear(normed, params, f"{prefix}.mlp.fc1"))
    return add(z, linear(hidden, params, f"{prefix}.mlp.fc2"))


def encode(img, params, config: VitConfig, linear=linear_f32) -> Tensor:
    """Image -> feature vector of length projection_dim (class-token readout)."""
    px = getattr(img, "pixels", img)
    if px.shape[0] != config.image_size or px.shape[1] != config.image_size:
        raise DimensionError(
            f"image {px.shape[0]}x{px.shape[1]} does not match configured "
            f"size {config.image_size}"
        )
    tokens = embed(patchify(img, config.patch_size), params, linear)
    for i in range(config.num_layers):
        tokens = encoder_block(tokens, params, f"vit.layers.{i}", config.num_heads, linear)
    tokens = layer_norm(tokens, params["vit.final_ln.g"], params["vit.final_ln.b"])
    return tokens[0]
