"""Masked autoregressive flow: a stack of affine MADE layers.

Data-to-noise direction, per layer::

    z_t = (x_t - shift_t(x_{<t})) * exp(-log_scale_t(x_{<t}))

so ``log|det dz/dx| = -sum_t log_scale_t``. One MADE pass per layer evaluates
the density; sampling inverts each layer one timepoint at a time. With
``flip`` set, the time axis is reversed between consecutive layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ad
from .ad import Tensor, no_grad
from .errors import ContractError, NumericalError
from .made import MadeNetwork, build_made

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class MafStack:
    layers: list  # MadeNetwork, or any callable x -> [batch, 2D] (shift block, log-scale block)
    input_dim: int
    flip: bool = True
    log_scale_bound: float | None = None  # soft clamp b*tanh(s/b); None leaves heads raw
    normalizer: dict | None = None
    meta: dict = field(default_factory=dict)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers if isinstance(layer, MadeNetwork) for p in layer.parameters()]

    def log_prob(self, x) -> Tensor:
        return maf_log_prob(self, x)

    def sample(self, n: int, seed: int) -> np.ndarray:
        return maf_sample(self, n, seed)


def build_maf(D: int, n_layers: int = 5, hidden_sizes=(256, 256, 256), flip: bool = True,
              seed: int = 0) -> MafStack:
    layers = [build_made(D, list(hidden_sizes), output_multiplier=2, seed=seed + 7919 * k)
              for k in range(n_layers)]
    return MafStack(layers, D, flip)


def _heads(model: MafStack, layer, u) -> tuple[Tensor, Tensor]:
    out = layer(u)
    D = model.input_dim
    shift, log_scale = out[:, :D], out[:, D:]
    b = model.log_scale_bound
    if b is not None:
        log_scale = ad.tanh(log_scale * (1.0 / b)) * b
    return shift, log_scale


def _check_finite(t: Tensor, layer: int) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericalError(f"non-finite values in MAF layer {layer}", layer=layer)


def maf_forward(model: MafStack, x) -> tuple[Tensor, Tensor]:
    """Map data to base noise; returns ``(z, log_det)`` with log_det of shape [batch]."""
    u = ad.as_tensor(x)
    D = model.input_dim
    log_det = Tensor(np.zeros(u.shape[0]))
    for k, layer in enumerate(model.layers):
        if k > 0 and model.flip:
            u = ad.flip(u, axis=1)
        shift, log_scale = _heads(model, layer, u)
        u = (u - shift) * ad.exp(-log_scale)
        log_det = log_det - log_scale.sum(axis=1)
        _check_finite(u, k)
    return u, log_det


def maf_inverse(model: MafStack, z) -> np.ndarray:
    """Map base noise to data, sequentially over time within each layer."""
    z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    D = model.input_dim
    with no_grad():
        for k in reversed(range(len(model.layers))):
            layer = model.layers[k]
            x = np.zeros_like(z)
            for t in range(D):
                shift, log_scale = _heads(model, layer, x)
                x[:, t] = z[:, t] * np.exp(log_scale.data[:, t]) + shift.data[:, t]
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite values inverting MAF layer {k}", layer=k)
            z = x[:, ::-1].copy() if (k > 0 and model.flip) else x
    return z


def standard_normal_log_prob(z: Tensor) -> Tensor:
    D = z.shape[1]
    return ad.square(z).sum(axis=1) * -0.5 - 0.5 * D * LOG_2PI


def maf_log_prob(model: MafStack, x) -> Tensor:
    z, log_det = maf_forward(model, x)
    return standard_normal_log_prob(z) + log_det


def maf_sample(model: MafStack, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ContractError("n must be >= 1")
    z = np.random.default_rng(seed).standard_normal((n, model.input_dim))
    return maf_inverse(model, z)
