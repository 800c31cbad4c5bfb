"""Chromatic-feature vision transformer for leaf disease classification.

A self-contained numpy stack: a small autodiff tensor core, a patch-token
transformer encoder, green-chromaticity feature fusion, a regularized
softmax head, a deterministic training loop, post-training int8
quantization, and a binary model container.
"""

from .chromatic import RgbImage, gcc_image, gcc_pixel, gcc_stats, split_channels
from .classifier import HeadConfig, Model, forward, fuse, head_forward, init_model, loss, predict
from .errors import ChromavitError
from .metrics import EvalReport, report_from_confusion
from .model_io import Dataset, load_dataset, load_image, load_model, save_model
from .quantize import (
    QuantizedModel,
    QuantizedTensor,
    compare,
    dequantize_tensor,
    quantize_model,
    quantize_tensor,
    quantized_forward,
)
from .tensor import GradTape, Tensor, grad_check
from .training import (
    AugmentConfig,
    TrainConfig,
    adam_step,
    augment,
    evaluate,
    stratified_split,
    train,
)
from .vit import VitConfig, attention, encode, encoder_block, msa, patchify

__version__ = "0.1.0"
