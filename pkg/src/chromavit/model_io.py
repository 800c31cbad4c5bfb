"""Deterministic binary model container and dataset directory ingestion.

Container layout (all integers little-endian; see FORMAT.md for a worked
hex example):

    bytes 0..3    magic "GVSM"
    bytes 4..7    format version, u32 (currently 1)
    bytes 8..11   header length L, u32
    bytes 12..    UTF-8 JSON header of L bytes
    bytes 12+L..  payload: concatenated tensor bytes

The header holds a config block (backbone/head dimensions, class names,
container kind, optional provenance) and a tensor manifest sorted by name,
each record carrying name, dtype ("f32" or "i8"), shape, byte offset into
the payload, byte length, and for int8 tensors the quantization scale and
zero point.  Serialization is a pure function of the model, so saving the
same model twice produces byte-identical files.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .chromatic import RgbImage
from .classifier import HeadConfig, Model
from .errors import ContainerError, DatasetError, VersionError
from .quantize import QuantizedModel, QuantizedTensor
from .tensor import Tensor
from .vit import VitConfig

log = logging.getLogger(__name__)

MAGIC = b"GVSM"
FORMAT_VERSION = 1
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _vit_dict(cfg: VitConfig) -> dict:
    return {
        "image_size": cfg.image_size,
        "patch_size": cfg.patch_size,
        "projection_dim": cfg.projection_dim,
        "num_heads": cfg.num_heads,
        "num_layers": cfg.num_layers,
        "mlp_hidden": cfg.mlp_hidden,
    }


def _head_dict(cfg: HeadConfig) -> dict:
    return {
        "hidden": cfg.hidden,
        "num_classes": cfg.num_classes,
        "l2_strength": cfg.l2_strength,
        "hinge": cfg.hinge,
    }


def serialize_model(model) -> bytes:
    """Encode a float or quantized model as container bytes."""
    records = []
    chunks = []
    offset = 0

    if isinstance(model, Model):
        kind = "float"
        entries = {name: ("f32", t.data, None, None) for name, t in model.params.items()}
        provenance = None
    elif isinstance(model, QuantizedModel):
        kind = "quantized"
        entries = {}
        for name, qt in model.weights.items():
            scale = qt.scale.tolist() if isinstance(qt.scale, np.ndarray) else float(qt.scale)
            entries[name] = ("i8", qt.data, scale, int(qt.zero_point))
        for name, arr in model.extras.items():
            entries[name] = ("f32", arr, None, None)
        provenance = model.provenance
    else:
        raise ContainerError(f"cannot serialize object of type {type(model).__name__}")

    for name in sorted(entries):
        dtype, arr, scale, zero_point = entries[name]
        raw = arr.astype("<f4" if dtype == "f32" else "<i1", copy=False).tobytes()
        record = {
            "name": name,
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": offset,
            "length": len(raw),
        }
        if dtype == "i8":
            record["scale"] = scale
            record["zero_point"] = zero_point
        records.append(record)
        chunks.append(raw)
        offset += len(raw)

    config = {
        "kind": kind,
        "vit": _vit_dict(model.vit),
        "head": _head_dict(model.head),
        "class_names": list(model.class_names),
    }
    if provenance is not None:
        config["provenance"] = provenance
    header = json.dumps(
        {"config": config, "tensors": records}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    return b"".join(
        [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(header)), header]
        + chunks
    )


def save_model(model, path) -> None:
    """Write the model container; overwrites an existing file."""
    path = Path(path)
    try:
        path.write_bytes(serialize_model(model))
    except OSError as exc:
        raise ContainerError(f"cannot write model to {path}: {exc}") from exc


def deserialize_model(data: bytes):
    """Decode container bytes into a Model or QuantizedModel.

    The manifest is validated (magic, version, offsets) before any tensor
    is materialized.
    """
    if len(data) < 12 or data[:4] != MAGIC:
        raise ContainerError(
            f"not a model container: bad magic {data[:4]!r}, expected {MAGIC!r}"
        )
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionError(
            f"container version {version} unsupported, this build reads {FORMAT_VERSION}"
        )
    header_len = struct.unpack_from("<I", data, 8)[0]
    if 12 + header_len > len(data):
        raise ContainerError("corrupt container: header extends past end of file")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
        config = header["config"]
        records = header["tensors"]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ContainerError(f"corrupt container header: {exc}") from exc

    payload = data[12 + header_len :]
    end = 0
    for rec in sorted(records, key=lambda r: r["offset"]):
        if rec["offset"] < end:
            raise ContainerError(f"corrupt container: tensor {rec['name']!r} overlaps")
        end = rec["offset"] + rec["length"]
    if end != len(payload):
        raise ContainerError(
            f"corrupt container: payload is {len(payload)} bytes, manifest covers {end}"
        )

    vit_cfg = VitConfig(**config["vit"])
    head_cfg = HeadConfig(**config["head"])
    class_names = list(config["class_names"])

    def raw(rec):
        return payload[rec["offset"] : rec["offset"] + rec["length"]]

    if config["kind"] == "float":
        params = {}
        for rec in records:
            arr = np.frombuffer(raw(rec), dtype="<f4").reshape(rec["shape"])
            params[rec["name"]] = Tensor._wrap(arr)
        return Model(vit=vit_cfg, head=head_cfg, class_names=class_names, params=params)

    weights, extras = {}, {}
    for rec in records:
        if rec["dtype"] == "i8":
            arr = np.frombuffer(raw(rec), dtype="<i1").reshape(rec["shape"])
            scale = rec["scale"]
            scale = np.asarray(scale, np.float64) if isinstance(scale, list) else float(scale)
            weights[rec["name"]] = QuantizedTensor(
                data=arr, scale=scale, zero_point=rec.get("zero_point", 0)
            )
        else:
            extras[rec["name"]] = np.frombuffer(raw(rec), dtype="<f4").reshape(rec["shape"])
    return QuantizedModel(
        vit=vit_cfg,
        head=head_cfg,
        class_names=class_names,
        weights=weights,
        extras=extras,
        provenance=config.get("provenance", {}),
    )


def load_model(path):
    """Read a container file; dispatches to float or quantized on dtype tags."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ContainerError(f"cannot read model from {path}: {exc}") from exc
    return deserialize_model(data)


@dataclass
class Dataset:
    """Labelled image collection: (path, class index) pairs plus class names."""

    items: list = field(default_factory=list)
    class_names: list = field(default_factory=list)
    skipped_files: int = 0

    def __len__(self):
        return len(self.items)


def load_dataset(root) -> Dataset:
    """Scan a class-per-directory image tree.

    Class order is the lexicographic order of the subdirectory names.
    Non-image and unreadable files are skipped and counted; a class
    directory with no usable image is an error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"dataset root {root} contains no class directories")

    items = []
    skipped = 0
    for label, class_dir in enumerate(class_dirs):
        start = len(items)
        for f in sorted(class_dir.iterdir()):
            if not f.is_file() or f.suffix.lower() not in IMAGE_SUFFIXES:
                if f.is_file():
                    skipped += 1
                continue
            try:
                with Image.open(f) as im:
                    im.verify()
            except (UnidentifiedImageError, OSError, SyntaxError) as exc:
                log.warning("skipping unreadable image %s: %s", f, exc)
                skipped += 1
                continue
            items.append((str(f), label))
        if len(items) == start:
            raise DatasetError(f"class directory {class_dir.name!r} has no usable images")
    return Dataset(
        items=items,
        class_names=[d.name for d in class_dirs],
        skipped_files=skipped,
    )


def load_image(path, image_size: int) -> RgbImage:
    """Decode, resize (bilinear), and rescale one image to [0, 1] floats."""
    return _load_image_cached(str(path), int(image_size))


@lru_cache(maxsize=1024)
def _load_image_cached(path: str, image_size: int) -> RgbImage:
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                if im.mode in ("1", "L", "LA", "I", "I;16", "F"):
                    log.warning("grayscale image %s replicated to 3 channels", path)
                im = im.convert("RGB")
            im = im.resize((image_size, image_size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / np.float32(255.0)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc
    return RgbImage(arr)
