"""Tour of the tensor core: immutable float32 arrays and the gradient tape.

Builds a two-layer network by hand, records it on a tape, and compares the
analytic gradients against central differences.
"""

import numpy as np

from chromavit import tensor as tn

rng = np.random.default_rng(0)

print("== tensors are immutable float32 values ==")
x = tn.Tensor([[1.0, 2.0], [3.0, 4.0]])
y = tn.matmul(x, x)
print("x @ x =", y.tolist())
try:
    y.data[0, 0] = 99.0
except ValueError:
    print("in-place writes are rejected, every op returns a fresh tensor")

print()
print("== recording a forward pass on a tape ==")
w1 = tn.Tensor(rng.normal(scale=0.5, size=(6, 4)).astype(np.float32))
w2 = tn.Tensor(rng.normal(scale=0.5, size=(4, 3)).astype(np.float32))
data = tn.Tensor(rng.uniform(-1, 1, (5, 6)).astype(np.float32))
target = tn.Tensor(rng.uniform(0.1, 1.0, (5, 3)).astype(np.float32))

with tn.GradTape() as tape:
    hidden = tn.gelu(tn.matmul(data, w1))
    probs = tn.softmax(tn.matmul(hidden, w2), axis=-1)
    loss = tn.mul(tn.sum(tn.mul(target, tn.log(tn.clip_min(probs, 1e-12)))), -1.0)

grads = tape.gradients(loss, {"w1": w1, "w2": w2})
print(f"loss = {loss.item():.4f}")
print(f"|grad w1| max = {np.abs(grads['w1']).max():.4f}")
print(f"|grad w2| max = {np.abs(grads['w2']).max():.4f}")

print()
print("== checking the tape against finite differences ==")


def loss_of(w):
    h = tn.gelu(tn.matmul(data, w))
    p = tn.softmax(tn.matmul(h, w2), axis=-1)
    return tn.mul(tn.sum(tn.mul(target, tn.log(tn.clip_min(p, 1e-12)))), -1.0)


err = tn.grad_check(loss_of, w1, h=1e-3)
print(f"max relative error vs central differences: {err:.2e} (tolerance 1e-3)")

print()
print("== softmax stays stable for huge logits ==")
big = tn.softmax(tn.Tensor([1000.0, 1000.0, 1000.0]), axis=-1)
print("softmax([1000, 1000, 1000]) =", big.tolist())
