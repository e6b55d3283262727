"""Central-difference validation of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError
from .tensor import Tensor, no_grad


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-6) -> float:
    """Return max |analytic - numeric| / max(1, |analytic|) over every input coordinate.

    Only inputs with ``requires_grad`` are checked. ``f`` must return a scalar
    tensor and the inputs must be 64-bit.
    """
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ContractError("grad_check requires float64 tensors")
    for t in inputs:
        t.grad = None
    out = f(*inputs)
    if out.data.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
    out.backward()

    worst = 0.0
    with no_grad():
        for t in inputs:
            if not t.requires_grad:
                continue
            analytic = np.zeros_like(t.data) if t.grad is None else t.grad
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = float(f(*inputs).data)
                flat[i] = orig - eps
                down = float(f(*inputs).data)
                flat[i] = orig
                numeric = (up - down) / (2 * eps)
                a = analytic.reshape(-1)[i]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
