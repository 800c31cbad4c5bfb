"""Post-training 8-bit quantization of a trained classifier.

Weight matrices (and the positional embedding table) are stored as int8
with a symmetric per-tensor scale, scale = max|w| / 127.  At inference each
float activation entering a weight matmul is dynamically quantized to
asymmetric int8 from its min/max range, the product accumulates in 32-bit
integers (saturating, with a diagnostic counter), and a single rescale by
scale_act * scale_w returns to float.  Biases, layer-norm parameters, and
the class token stay float32; nonlinearities and layer norm run in float.
"""

from __future__ import annotations

import datetime
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import chromatic, vit
from .classifier import HeadConfig, Model, fuse, head_forward
from .errors import DomainError, NumericError
from .tensor import Tensor
from .vit import VitConfig

INT8_MAX = 127
INT32_MAX = 2**31 - 1


@dataclass
class QuantizedTensor:
    """int8 payload with per-tensor (or per-column) scale."""

    data: np.ndarray  # int8
    scale: object  # float, or a float vector for per-channel
    zero_point: int = 0

    def __post_init__(self):
        if self.data.dtype != np.int8:
            raise DomainError(f"quantized payload must be int8, got {self.data.dtype}")


@dataclass
class QuantizedModel:
    """Quantized counterpart of Model: int8 weights plus float32 extras."""

    vit: VitConfig
    head: HeadConfig
    class_names: list
    weights: dict  # name -> QuantizedTensor ("*.w" matrices and "vit.pos")
    extras: dict  # name -> float32 ndarray (biases, LN, class token)
    provenance: dict = field(default_factory=dict)
    stats: dict = field(default_factory=lambda: {"saturated_accumulators": 0})


def _is_quantizable(name: str) -> bool:
    # Matmul weight matrices, plus the positional table which dominates the
    # float leftovers at small projection widths.
    return name.endswith(".w") or name == "vit.pos"


def quantize_tensor(w, per_channel=False) -> QuantizedTensor:
    """Symmetric int8 quantization, values in [-127, 127].

    An all-zero tensor gets scale 1 and an all-zero payload.  With
    ``per_channel`` a 2-D tensor receives one scale per output column.
    """
    arr = np.asarray(w.data if isinstance(w, Tensor) else w, np.float64)
    if not np.isfinite(arr).all():
        raise NumericError("cannot quantize non-finite tensor")
    if per_channel and arr.ndim == 2:
        peak = np.abs(arr).max(axis=0)
        scale = np.where(peak == 0.0, 1.0, peak / INT8_MAX)
        q = np.clip(np.rint(arr / scale), -INT8_MAX, INT8_MAX).astype(np.int8)
        return QuantizedTensor(data=q, scale=scale, zero_point=0)
    peak = float(np.abs(arr).max()) if arr.size else 0.0
    scale = 1.0 if peak == 0.0 else peak / INT8_MAX
    q = np.clip(np.rint(arr / scale), -INT8_MAX, INT8_MAX).astype(np.int8)
    return QuantizedTensor(data=q, scale=scale, zero_point=0)


def dequantize_tensor(q: QuantizedTensor) -> Tensor:
    """Reconstruct float32 values: scale * (q - zero_point)."""
    w = (q.data.astype(np.float64) - q.zero_point) * q.scale
    return Tensor(w.astype(np.float32))


def quantize_model(model: Model, per_channel=False) -> QuantizedModel:
    """Quantize every weight matrix; keep biases/LN/class-token float32."""
    from .model_io import serialize_model  # late import: model_io reads this module

    weights, extras = {}, {}
    for name, t in model.params.items():
        if _is_quantizable(name):
            weights[name] = quantize_tensor(t, per_channel=per_channel and name != "vit.pos")
        else:
            extras[name] = t.data
    provenance = {
        "source_sha256": hashlib.sha256(serialize_model(model)).hexdigest(),
        "quantized_at": datetime.date.today().isoformat(),
    }
    return QuantizedModel(
        vit=model.vit,
        head=model.head,
        class_names=list(model.class_names),
        weights=weights,
        extras=extras,
        provenance=provenance,
    )


def quantize_activation(x: np.ndarray):
    """Dynamic asymmetric int8 quantization from the min/max range.

    Returns (q, scale, zero_point) with x ~ scale * (q - zero_point).
    """
    lo = float(x.min())
    hi = float(x.max())
    if hi == lo:
        raise DomainError("activation range is degenerate (max == min)")
    scale = (hi - lo) / 255.0
    zero_point = -int(np.rint(lo / scale)) - 128
    q = np.clip(np.rint(x / scale) + zero_point, -128, 127).astype(np.int8)
    return q, scale, zero_point


def _int8_matmul(x: np.ndarray, qt: QuantizedTensor, stats: dict) -> np.ndarray:
    """x @ W through int8 with 32-bit saturating accumulation."""
    if float(x.max()) == float(x.min()):
        # Degenerate constant activation: quantization range collapses,
        # bypass and use the dequantized weights in float.
        w = (qt.data.astype(np.float64) - qt.zero_point) * qt.scale
        return (x.astype(np.float64) @ w).astype(np.float32)
    q, scale_act, zp = quantize_activation(x)
    acc = (q.astype(np.int64) - zp) @ qt.data.astype(np.int64)
    clipped = np.clip(acc, -INT32_MAX - 1, INT32_MAX)
    overflow = int((clipped != acc).sum())
    if overflow:
        stats["saturated_accumulators"] = stats.get("saturated_accumulators", 0) + overflow
    return (clipped.astype(np.float64) * (scale_act * qt.scale)).astype(np.float32)


def _quantized_linear(qm: QuantizedModel):
    def linear(x, params, name):
        y = _int8_matmul(x.data, qm.weights[name + ".w"], qm.stats)
        return Tensor._wrap(y + qm.extras[name + ".b"])

    return linear


def quantized_forward(qm: QuantizedModel, img) -> np.ndarray:
    """Class probabilities from the int8 inference path."""
    params = {name: Tensor._wrap(arr) for name, arr in qm.extras.items()}
    params["vit.pos"] = dequantize_tensor(qm.weights["vit.pos"])
    linear = _quantized_linear(qm)
    feature = vit.encode(img, params, qm.vit, linear)
    gcc = chromatic.gcc_image(img)
    return head_forward(fuse(feature, gcc), params, linear).data


@dataclass(frozen=True)
class QuantReport:
    """Paired float-vs-quantized evaluation plus serialized sizes."""

    float_accuracy: float
    quant_accuracy: float
    accuracy_delta: float
    top1_agreement: float
    float_bytes: int
    quant_bytes: int
    size_ratio: float


def compare(float_model: Model, qm: QuantizedModel, dataset) -> QuantReport:
    """Evaluate both models on the same images and measure size reduction."""
    from . import model_io
    from .classifier import predict

    if float_model.class_names != qm.class_names:
        raise DomainError("float and quantized models disagree on class names")
    correct_f = correct_q = agree = 0
    for path, label in dataset.items:
        img = model_io.load_image(path, float_model.vit.image_size)
        pf = int(np.argmax(predict(float_model, img)))
        pq = int(np.argmax(quantized_forward(qm, img)))
        correct_f += pf == label
        correct_q += pq == label
        agree += pf == pq
    n = len(dataset.items)
    float_bytes = len(model_io.serialize_model(float_model))
    quant_bytes = len(model_io.serialize_model(qm))
    return QuantReport(
        float_accuracy=correct_f / n,
        quant_accuracy=correct_q / n,
        accuracy_delta=correct_f / n - correct_q / n,
        top1_agreement=agree / n,
        float_bytes=float_bytes,
        quant_bytes=quant_bytes,
        size_ratio=float_bytes / quant_bytes,
    )


def quant_report_csv(report: QuantReport) -> str:
    header = (
        "float_accuracy,quant_accuracy,accuracy_delta,top1_agreement,"
        "float_bytes,quant_bytes,size_ratio"
    )
    row = (
        f"{report.float_accuracy!r},{report.quant_accuracy!r},"
        f"{report.accuracy_delta!r},{report.top1_agreement!r},"
        f"{report.float_bytes},{report.quant_bytes},{report.size_ratio!r}"
    )
    return header + "\n" + row + "\n"
