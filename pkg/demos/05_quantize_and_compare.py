"""Post-training int8 quantization: size, fidelity, and the container round trip.

Expects the model trained by 04_train_on_synthetic_disks.py (runs it first
if the file is missing), quantizes it, and compares the two models on the
same images.
"""

import runpy
from pathlib import Path

import numpy as np

from chromavit import model_io, quantize
from chromavit.classifier import predict

OUT = Path(__file__).resolve().parent.parent / "demo_output"
MODEL = OUT / "disks_model.gvsm"

if not MODEL.exists():
    print("training the disk model first ...")
    runpy.run_path(str(Path(__file__).parent / "04_train_on_synthetic_disks.py"))
    print()

model = model_io.load_model(MODEL)
print("== weight quantization ==")
qm = quantize.quantize_model(model)
print(f"{len(qm.weights)} tensors stored as int8, {len(qm.extras)} kept float32")
name = "vit.layers.0.attn.wq.w"
qt = qm.weights[name]
w = model.params[name].data
print(f"{name}: scale {qt.scale:.6f}, "
      f"max round-trip error {np.abs(w - quantize.dequantize_tensor(qt).data).max():.2e} "
      f"(bound scale/2 = {qt.scale / 2:.2e})")

qpath = OUT / "disks_model.q.gvsm"
model_io.save_model(qm, qpath)
fb, qb = MODEL.stat().st_size, qpath.stat().st_size
print(f"container sizes: {fb} -> {qb} bytes, ratio {fb / qb:.2f}x")

print()
print("== paired inference ==")
ds = model_io.load_dataset(OUT / "disks")
report = quantize.compare(model, qm, ds)
print(f"float accuracy     {report.float_accuracy:.3f}")
print(f"quantized accuracy {report.quant_accuracy:.3f}")
print(f"top-1 agreement    {report.top1_agreement:.3f}")
print(f"accuracy delta     {report.accuracy_delta:+.3f}")

img = model_io.load_image(ds.items[0][0], model.vit.image_size)
pf = predict(model, img)
pq = quantize.quantized_forward(qm, img)
print("probability drift on one image:", np.abs(pf - pq).max())

print()
print("== round trip through the container ==")
loaded = model_io.load_model(qpath)
identical = all(
    np.array_equal(loaded.weights[k].data, qm.weights[k].data) for k in qm.weights
)
print("int8 payloads identical after save/load:", identical)
print("provenance:", loaded.provenance)
