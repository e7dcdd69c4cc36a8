"""Parameterized layers: convolutions, linear, batch norm, SE, adapters.

Every layer is constructed with a ``path`` string and a ``seed``; its weights
are drawn from a generator keyed on (seed, crc32(path)), so initialization is
independent of construction order. That is what lets a fusion-free twin
network reproduce the shared and task weights of the full model bit-exactly.

Owners tag which task a parameter belongs to: "shared" parameters are trained
by the full objective, "depth"/"seg" parameters only by their task loss.
"""

from __future__ import annotations

import zlib

import numpy as np

from ..autodiff import Tensor, ops
from ..errors import ConfigError

OWNER_SHARED = "shared"
OWNER_DEPTH = "depth"
OWNER_SEG = "seg"

TASKS = ("depth", "seg")


def _rng_for(seed: int, path: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFF, zlib.crc32(path.encode())]))


def fan_in_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    def __init__(self, seed: int, path: str, owner: str, c_in: int, c_out: int,
                 kernel: int, stride: int = 1, padding: int | None = None,
                 zero_init: bool = False, bias: bool = True):
        self.path = path
        self.owner = owner
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        if zero_init:
            w = np.zeros((c_out, c_in, kernel, kernel))
        else:
            rng = _rng_for(seed, path)
            w = fan_in_uniform(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def named_params(self):
        out = [(f"{self.path}.weight", self.weight, self.owner)]
        if self.bias is not None:
            out.append((f"{self.path}.bias", self.bias, self.owner))
        return out

    def named_state(self):
        return []


class Linear:
    def __init__(self, seed: int, path: str, owner: str, n_in: int, n_out: int):
        self.path = path
        self.owner = owner
        rng = _rng_for(seed, path)
        self.weight = Tensor(fan_in_uniform(rng, (n_out, n_in), n_in), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, ops.transpose(self.weight)), self.bias)

    def named_params(self):
        return [(f"{self.path}.weight", self.weight, self.owner),
                (f"{self.path}.bias", self.bias, self.owner)]

    def named_state(self):
        return []


class BatchNorm2d:
    def __init__(self, path: str, owner: str, channels: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.path = path
        self.owner = owner
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, training=training,
                              momentum=self.momentum, eps=self.eps)

    def named_params(self):
        return [(f"{self.path}.gamma", self.gamma, self.owner),
                (f"{self.path}.beta", self.beta, self.owner)]

    def named_state(self):
        return [(f"{self.path}.running_mean", self.running_mean),
                (f"{self.path}.running_var", self.running_var)]


class TaskBatchNorm:
    """One independent batch norm per task; statistics never mix."""

    def __init__(self, path: str, channels: int, **kw):
        self.norms = {t: BatchNorm2d(f"{path}.{t}", t, channels, **kw) for t in TASKS}

    def __call__(self, x: Tensor, task: str, training: bool) -> Tensor:
        return self.norms[task](x, training)

    def named_params(self):
        return [p for t in TASKS for p in self.norms[t].named_params()]

    def named_state(self):
        return [s for t in TASKS for s in self.norms[t].named_state()]


class SEBlock:
    """Channel gating: sigmoid(FC2(relu(FC1(GAP(x))))) scales each channel."""

    def __init__(self, seed: int, path: str, owner: str, channels: int, reduction: int = 16):
        if channels < reduction:
            raise ConfigError(f"SE block needs channels >= reduction, got {channels} < {reduction}")
        self.path = path
        self.fc1 = Linear(seed, f"{path}.fc1", owner, channels, channels // reduction)
        self.fc2 = Linear(seed, f"{path}.fc2", owner, channels // reduction, channels)

    def __call__(self, x: Tensor) -> Tensor:
        pooled = ops.global_avg_pool(x)
        gate = ops.sigmoid(self.fc2(ops.relu(self.fc1(pooled))))
        n, c = gate.shape
        return ops.mul(x, ops.reshape(gate, (n, c, 1, 1)))

    def named_params(self):
        return self.fc1.named_params() + self.fc2.named_params()

    def named_state(self):
        return []


class TaskSE:
    def __init__(self, seed: int, path: str, channels: int, reduction: int):
        self.blocks = {t: SEBlock(seed, f"{path}.{t}", t, channels, reduction) for t in TASKS}

    def __call__(self, x: Tensor, task: str) -> Tensor:
        return self.blocks[task](x)

    def named_params(self):
        return [p for t in TASKS for p in self.blocks[t].named_params()]

    def named_state(self):
        return []


class TaskResidualAdapter:
    """Task-owned 1x1 convolution added to a shared residual layer.

    Zero-initialized so each adapter starts as a no-op and the block reduces
    to its shared path.
    """

    def __init__(self, seed: int, path: str, c_in: int, c_out: int, stride: int = 1):
        self.convs = {t: Conv2d(seed, f"{path}.{t}", t, c_in, c_out, kernel=1,
                                stride=stride, padding=0, zero_init=True)
                      for t in TASKS}

    def __call__(self, x: Tensor, task: str) -> Tensor:
        return self.convs[task](x)

    def named_params(self):
        return [p for t in TASKS for p in self.convs[t].named_params()]

    def named_state(self):
        return []
