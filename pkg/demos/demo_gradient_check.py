"""
Checking the tape against finite differences
============================================

A small expression first, then the full training objective on a 20-node
graph with all three losses switched on.
"""

import numpy as np

from hinrep import autodiff as ad
from hinrep.autodiff import Tape, Tensor
from hinrep.diagnostics import run_gradcheck

# sigmoid(w . x) for one sample; d/dw = sigmoid' * x
w = Tensor(np.array([[0.5, -0.25, 1.0]]), requires_grad=True)
b = Tensor(np.zeros(1), requires_grad=True)
x = Tensor(np.array([[1.0, 2.0, -1.0]]))
with Tape() as tape:
    y = ad.sum_(ad.sigmoid(ad.affine(x, w, b)))
tape.backward(y)
s = 1 / (1 + np.exp(-(w.value @ x.value.T)))
print("tape:", w.grad, " by hand:", (s * (1 - s)) * x.value)

# central differences over every parameter entry
report = ad.grad_check(lambda: ad.sum_(ad.sigmoid(ad.affine(x, w, b))), {"w": w, "b": b})
print("small expression:", report.passed, f"{report.worst:.2e}")

# the full objective; sampling and consistency targets are frozen so the loss is smooth
report = run_gradcheck(seed=0)
for name, err in sorted(report.max_rel_error.items()):
    print(f"  {name:24s} {err:.2e}")
print("objective:", "PASS" if report.passed else "FAIL", f"worst {report.worst:.2e}")
