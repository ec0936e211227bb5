"""
The reverse-mode tape, checked against finite differences
=========================================================

Runs a small computation through the autodiff tape (matrix product,
bias, tanh, segment reduction, squared norm), then compares the
gradient of every input coordinate against central finite differences.
"""

import numpy as np

from spaigraph.autodiff import Tape

rng = np.random.default_rng(0)
inputs = {
    "X": rng.standard_normal((6, 3)),
    "W": rng.standard_normal((3, 4)),
    "b": rng.standard_normal(4),
}
offsets = np.array([0, 2, 5, 6])  # three row segments: {0,1}, {2,3,4}, {5}


def loss_value_and_vars(vals, requires_grad=True):
    tape = Tape()
    make = tape.leaf if requires_grad else tape.constant
    X, W, b = make(vals["X"]), make(vals["W"]), make(vals["b"])
    h = tape.tanh(tape.add_bias(tape.matmul(X, W), b))
    pooled = tape.segment_sum(h, offsets, 3)
    loss = tape.square_norm(tape.reshape(pooled, (12,)))
    return tape, loss, {"X": X, "W": W, "b": b}


tape, loss, vars_ = loss_value_and_vars(inputs)
tape.backward(loss)
print(f"loss = {float(loss.value):.6f}")

# Central differences, one coordinate at a time.
h = 1e-6
for name, arr in inputs.items():
    flat = arr.ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        _, hi, _ = loss_value_and_vars(inputs, requires_grad=False)
        flat[i] = orig - h
        _, lo, _ = loss_value_and_vars(inputs, requires_grad=False)
        flat[i] = orig
        fd = (float(hi.value) - float(lo.value)) / (2 * h)
        auto = vars_[name].grad.ravel()[i]
        worst = max(worst, abs(fd - auto) / max(abs(fd), 1e-12))
    print(f"d loss / d {name}: max relative deviation from finite differences = {worst:.2e}")
