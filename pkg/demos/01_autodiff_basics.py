#!/usr/bin/env python3
"""A tour of the tensor engine underneath the forecaster.

Builds a tiny computation on the tape, runs the backward pass, and checks a
gradient against central finite differences by hand.
"""

import numpy as np

from protocast import tensor as tn
from protocast.tensor import Tape, Tensor, backward

rng = np.random.default_rng(0)

# A two-layer perceptron applied to a batch of rows, all on the tape.
x = Tensor(rng.normal(size=(4, 3)))
w1 = Tensor(rng.normal(size=(3, 5)) * 0.5, requires_grad=True)
b1 = Tensor(np.zeros(5), requires_grad=True)
w2 = Tensor(rng.normal(size=(5, 2)) * 0.5, requires_grad=True)
target = Tensor(rng.normal(size=(4, 2)))

with Tape() as tape:
    hidden = tn.relu(tn.add_rowvec(tn.matmul(x, w1), b1))
    out = tn.matmul(hidden, w2)
    loss = tn.l2_diff(out, target)
backward(loss, tape)

print(f"loss = {loss.item():.4f}")
print(f"dL/dw2 top-left entry = {w2.grad[0, 0]:+.6f}")

# The same derivative by central differences: nudge the entry both ways.
step = 1e-6
w2.data[0, 0] += step
with tn.no_grad():
    up = tn.l2_diff(tn.matmul(tn.relu(tn.add_rowvec(tn.matmul(x, w1), b1)), w2), target).item()
w2.data[0, 0] -= 2 * step
with tn.no_grad():
    down = tn.l2_diff(tn.matmul(tn.relu(tn.add_rowvec(tn.matmul(x, w1), b1)), w2), target).item()
w2.data[0, 0] += step
numeric = (up - down) / (2 * step)
print(f"finite difference      = {numeric:+.6f}")
print(f"agreement              = {abs(w2.grad[0, 0] - numeric):.2e}")

# The probability vector the prototype layer is built on: softmax over
# negated squared distances. Shifting every distance changes nothing.
d = Tensor(np.array([0.0, np.log(3.0)]))
print(f"\nsoftmax_neg([0, ln 3])        = {tn.softmax_neg(d).data}")
print(f"softmax_neg([5, 5 + ln 3])    = {tn.softmax_neg(Tensor(d.data + 5.0)).data}")
