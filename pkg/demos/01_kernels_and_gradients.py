"""
Kernels, the tape, and gradient checks
======================================

Runs a convolution against a naive loop, records a small computation on a
tape, and checks its reverse-mode gradient with central differences.
"""

import numpy as np

from mrinet.engine import Tape, backward, finite_difference_check, kernels, ops

rng = np.random.default_rng(0)

# A 3x3 "same" convolution with stride 2 on a 7x7 input gives ceil(7/2) = 4.
x = rng.standard_normal((1, 7, 7, 2))
w = rng.standard_normal((3, 3, 2, 4))
y = kernels.conv2d_forward(x, w, None, stride=2, padding="same")
print("conv output shape:", y.shape)

# Naive loop for the top-left output element. Covering 4 outputs at stride 2
# with a 3-wide kernel needs (4 - 1) * 2 + 3 = 9 rows, so 2 padded rows: one
# above, one below.
pad = ((4 - 1) * 2 + 3 - 7) // 2
acc = sum(
    x[0, i - pad, j - pad] @ w[i, j]
    for i in range(3)
    for j in range(3)
    if 0 <= i - pad < 7 and 0 <= j - pad < 7
)
print("loop vs kernel, element (0,0):", np.abs(acc - y[0, 0, 0]).max())

# Recording happens only when a tracked value is involved.
tape = Tape()
wv = tape.watch(w, name="w")
logits = ops.global_average_pool(ops.relu(ops.conv2d(x, wv, None, stride=2, padding="same")))
loss, probs = ops.softmax_crossentropy(logits, np.array([2]))
grads = backward(tape, loss)
print("loss:", float(loss.value), "grad norm:", np.linalg.norm(grads[wv]))


# The same function works on plain arrays, which is what the checker needs.
def f(kernel):
    h = ops.relu(ops.conv2d(x, kernel, None, stride=2, padding="same"))
    return ops.softmax_crossentropy(ops.global_average_pool(h), np.array([2]))[0]


report = finite_difference_check(f, w, probes=100)
print(f"finite differences: max rel error {report.max_rel_error:.2e} -> {'ok' if report.passed else 'FAILED'}")
