"""Tape-based reverse-mode differentiation on a small composite function,
cross-checked against central finite differences.

check_mode switches the tensor stack to float64 so the finite-difference
probe is limited by truncation error, not by float32 rounding.
"""

import numpy as np

from dehazemamba import ops
from dehazemamba.tensor import Tape, Tensor, check_mode

rng = np.random.default_rng(0)

with check_mode():
    x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    b = Tensor(np.zeros(5), requires_grad=True)

    def forward():
        h = ops.silu(ops.linear(x, w, b))
        return ops.reduce_sum(ops.mul(h, h))

    with Tape() as tape:
        loss = forward()
        tape.backward(loss)
        gx = tape.grad(x).copy()
        gw = tape.grad(w).copy()

    print(f"loss = {loss.item():.6f}")
    print(f"grad shapes: x {gx.shape}, w {gw.shape}")

    # finite-difference probe of a few coordinates of w
    eps = 1e-6
    worst = 0.0
    for _ in range(10):
        i, j = rng.integers(0, 3), rng.integers(0, 5)
        keep = w.data[i, j]
        w.data[i, j] = keep + eps
        up = forward().item()
        w.data[i, j] = keep - eps
        down = forward().item()
        w.data[i, j] = keep
        fd = (up - down) / (2 * eps)
        err = abs(fd - gw[i, j]) / (abs(fd) + 1e-12)
        worst = max(worst, err)
        print(f"w[{i},{j}]  tape {gw[i, j]:+.6f}  fd {fd:+.6f}  "
              f"rel err {err:.2e}")

    print(f"worst relative error: {worst:.2e}")

    # gradients accumulate across reuses of the same tensor
    with Tape() as tape:
        y = ops.add(ops.mul(x, x), ops.mul(x, 2.0))
        tape.backward(ops.reduce_sum(y))
        print("d/dx sum(x*x + 2x) == 2x + 2:",
              np.allclose(tape.grad(x), 2 * x.data + 2, atol=1e-9))
