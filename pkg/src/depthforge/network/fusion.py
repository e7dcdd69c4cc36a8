"""Cross-task fusion units for the decoder pair.

The cross propagation unit exchanges channel information between the depth
and segmentation streams through 1x1 stride-1 convolutions:

    d' = d + H1(s) + H2(d),    s' = s + B1(d) + B2(s)

The affinity propagation unit builds a dense row-stochastic HW x HW matrix
from the segmentation feature,

    a[j, i] = softmax_i( F(s)_i . K(s)_j )

and redistributes depth features spatially:

    d' = BN(P(A G(d))) + d

All fusion convolutions are zero-initialized, so both units start as exact
identities. Cross-task inputs are detached by default: that is the mechanism
that keeps task-specific parameters out of the other task's gradient.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import ConfigError
from .layers import OWNER_SHARED, BatchNorm2d, Conv2d

APU_MAX_PIXELS = 4096


class CrossPropagationUnit:
    def __init__(self, seed: int, path: str, channels: int, detach_cross: bool = True):
        self.detach_cross = detach_cross
        mk = lambda name: Conv2d(seed, f"{path}.{name}", OWNER_SHARED, channels, channels,
                                 kernel=1, padding=0, zero_init=True)
        self.h1, self.h2 = mk("h1"), mk("h2")
        self.b1, self.b2 = mk("b1"), mk("b2")

    def __call__(self, d: Tensor, s: Tensor) -> tuple[Tensor, Tensor]:
        if d.shape[2:] != s.shape[2:]:
            raise ConfigError(f"cpu_unit: spatial sizes differ, {d.shape} vs {s.shape}")
        s_in = s.detach() if self.detach_cross else s
        d_in = d.detach() if self.detach_cross else d
        d_next = ops.add(d, ops.add(self.h1(s_in), self.h2(d)))
        s_next = ops.add(s, ops.add(self.b1(d_in), self.b2(s)))
        return d_next, s_next

    def named_params(self):
        return [p for conv in (self.h1, self.h2, self.b1, self.b2) for p in conv.named_params()]

    def named_state(self):
        return []


def affinity_matrix(f_feat: Tensor, k_feat: Tensor) -> Tensor:
    """Row-stochastic (N, HW, HW) affinity from (N, C, H, W) key/query maps."""
    n, c, h, w = f_feat.shape
    if h * w > APU_MAX_PIXELS:
        raise ConfigError(f"affinity matrix limited to {APU_MAX_PIXELS} pixels, got {h * w}")
    fq = ops.reshape(f_feat, (n, c, h * w))
    kq = ops.reshape(k_feat, (n, c, h * w))
    rows = []
    for i in range(n):
        logits = ops.matmul(ops.transpose(fq[(i,)]), kq[(i,)])  # [i_pix, j_pix]
        a = ops.transpose(ops.softmax(logits, axis=0))          # row j sums to 1 over i
        rows.append(ops.reshape(a, (1, h * w, h * w)))
    return rows[0] if n == 1 else ops.concat(rows, axis=0)


class AffinityPropagationUnit:
    def __init__(self, seed: int, path: str, channels: int, detach_cross: bool = True):
        self.detach_cross = detach_cross
        inner = max(channels // 2, 1)
        self.inner = inner
        self.f = Conv2d(seed, f"{path}.f", OWNER_SHARED, channels, inner, kernel=1, padding=0)
        self.k = Conv2d(seed, f"{path}.k", OWNER_SHARED, channels, inner, kernel=1, padding=0)
        self.g = Conv2d(seed, f"{path}.g", OWNER_SHARED, channels, inner, kernel=1, padding=0)
        self.p = Conv2d(seed, f"{path}.p", OWNER_SHARED, inner, channels, kernel=1,
                        padding=0, zero_init=True)
        self.bn = BatchNorm2d(f"{path}.bn", OWNER_SHARED, channels)

    def affinity(self, s: Tensor) -> Tensor:
        s_in = s.detach() if self.detach_cross else s
        return affinity_matrix(self.f(s_in), self.k(s_in))

    def propagate(self, d: Tensor, affinity: Tensor, training: bool) -> Tensor:
        n, c, h, w = d.shape
        gd = ops.reshape(self.g(d), (n, self.inner, h * w))
        mixed = []
        for i in range(n):
            # out[:, j] = sum_i G[:, i] * a[j, i]  ->  G @ A^T
            m = ops.matmul(gd[(i,)], ops.transpose(affinity[(i,)]))
            mixed.append(ops.reshape(m, (1, self.inner, h, w)))
        mixed_t = mixed[0] if n == 1 else ops.concat(mixed, axis=0)
        return ops.add(self.bn(self.p(mixed_t), training), d)

    def __call__(self, d: Tensor, s: Tensor, training: bool) -> Tensor:
        return self.propagate(d, self.affinity(s), training)

    def named_params(self):
        return [p for layer in (self.f, self.k, self.g, self.p, self.bn)
                for p in layer.named_params()]

    def named_state(self):
        return self.bn.named_state()
