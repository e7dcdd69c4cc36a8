"""Central finite-difference verification of analytic gradients.

The checker scalarizes the op under test by appending a sum, runs one taped
backward for the analytic gradients, then probes every element of every
checked input with central differences (f(x+eps) - f(x-eps)) / (2 eps).
The reported figure is the max over elements of

    |fd - analytic| / max(|fd|, |analytic|, 1.0)

so it reads as a relative error for O(1) gradients without blowing up on
elements whose true gradient is ~0.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import ops
from .tensor import Tape, Tensor


def finite_diff_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
                      eps: float = 1e-5, wrt: Optional[Sequence[int]] = None,
                      max_probes_per_input: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None) -> float:
    """Return the max relative error between analytic and numeric gradients.

    ``fn`` maps the given tensors to a Tensor of any shape. ``wrt`` selects
    which inputs to differentiate (default: those with requires_grad).
    ``max_probes_per_input`` caps the probed elements per input (sampled with
    ``rng``) to keep composite checks fast; by default every element is probed.
    """
    inputs = list(inputs)
    if wrt is None:
        wrt = [i for i, t in enumerate(inputs) if t.requires_grad]
    for i in wrt:
        inputs[i].requires_grad = True
        inputs[i].grad = None

    with Tape() as tape:
        loss = ops.sum_(fn(*inputs))
    tape.backward(loss)
    analytic = {i: (np.zeros(inputs[i].shape) if inputs[i].grad is None
                    else inputs[i].grad.copy()) for i in wrt}

    def eval_loss() -> float:
        return float(fn(*inputs).data.sum())

    worst = 0.0
    for i in wrt:
        flat = inputs[i].data.reshape(-1)
        an_flat = analytic[i].reshape(-1)
        idxs = range(flat.size)
        if max_probes_per_input is not None and flat.size > max_probes_per_input:
            gen = rng if rng is not None else np.random.default_rng(0)
            idxs = gen.choice(flat.size, size=max_probes_per_input, replace=False)
        for k in idxs:
            orig = flat[k]
            flat[k] = orig + eps
            up = eval_loss()
            flat[k] = orig - eps
            down = eval_loss()
            flat[k] = orig
            fd = (up - down) / (2.0 * eps)
            an = an_flat[k]
            err = abs(fd - an) / max(abs(fd), abs(an), 1.0)
            worst = max(worst, err)
    return worst
