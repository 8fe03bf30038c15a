"""Masked autoencoder (MADE) conditioner over a time series.

Inputs carry degrees 1..D in natural time order. Hidden units cycle through
degrees 1..D-1. A hidden connection is kept when ``deg_out >= deg_in``; an
output connection only when ``deg_out > deg_in``, so output head ``t`` sees
inputs ``1..t-1`` and nothing else.

Conditional inputs (the CNF pseudo-time) bypass the masks: they feed the
first hidden layer and, directly, the output layer, so every output head can
depend on them, including head 1 which has no admissible hidden parent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ad
from .ad import Tensor
from .errors import ContractError, DimensionError


@dataclass
class MadeNetwork:
    input_dim: int
    hidden_sizes: list[int]
    output_multiplier: int
    conditional_dim: int
    weights: list[Tensor]  # layer l: (fan_in, fan_out)
    biases: list[Tensor]
    masks: list[np.ndarray]
    degrees: list[np.ndarray]  # input, hidden..., output
    cond_weights: list[Tensor]  # [first hidden, output]; empty when conditional_dim == 0
    skip_weight: Tensor | None = None  # direct input -> output path, masked like the output layer
    skip_mask: np.ndarray | None = None

    @property
    def output_dim(self) -> int:
        return self.input_dim * self.output_multiplier

    def parameters(self) -> list[Tensor]:
        skip = [] if self.skip_weight is None else [self.skip_weight]
        return [*self.weights, *self.biases, *self.cond_weights, *skip]

    def masked_weights(self) -> list[Tensor]:
        """Effective weights W * M (skip path last); compute once per pass and reuse."""
        ws = [w * m for w, m in zip(self.weights, self.masks)]
        if self.skip_weight is not None:
            ws.append(self.skip_weight * self.skip_mask)
        return ws

    def __call__(self, x, cond=None, masked=None) -> Tensor:
        return made_forward(self, x, cond, masked)


def hidden_degrees(D: int, size: int) -> np.ndarray:
    return np.arange(size) % (D - 1) + 1


def build_masks(D: int, hidden_sizes: list[int], output_multiplier: int):
    degrees = [np.arange(1, D + 1)]
    degrees += [hidden_degrees(D, h) for h in hidden_sizes]
    degrees.append(np.tile(np.arange(1, D + 1), output_multiplier))
    masks = []
    for l in range(len(degrees) - 1):
        d_in, d_out = degrees[l], degrees[l + 1]
        if l == len(degrees) - 2:
            m = d_out[None, :] > d_in[:, None]
        else:
            m = d_out[None, :] >= d_in[:, None]
        masks.append(m.astype(np.float64))
    return masks, degrees


def skip_mask(D: int, output_multiplier: int) -> np.ndarray:
    d_out = np.tile(np.arange(1, D + 1), output_multiplier)
    return (d_out[None, :] > np.arange(1, D + 1)[:, None]).astype(np.float64)


def build_made(D: int, hidden_sizes, output_multiplier: int = 2, conditional_dim: int = 0,
               seed: int = 0, zero_last: bool = False, skip: bool = False) -> MadeNetwork:
    """Construct a MADE with uniform(+-1/sqrt(fan_in)) init.

    ``zero_last`` zeroes the output layer (weights, bias, conditional weights)
    so the network starts as the constant zero map.
    """
    if D < 2:
        raise ContractError("MADE needs at least two inputs")
    hidden_sizes = [int(h) for h in hidden_sizes]
    if not hidden_sizes:
        raise ContractError("hidden_sizes must be nonempty")
    rng = np.random.default_rng(seed)
    masks, degrees = build_masks(D, hidden_sizes, output_multiplier)
    sizes = [D, *hidden_sizes, D * output_multiplier]
    weights, biases = [], []
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in + (conditional_dim if l in (0, len(sizes) - 2) else 0))
        last = l == len(sizes) - 2
        w = np.zeros((fan_in, fan_out)) if last and zero_last else rng.uniform(-bound, bound, (fan_in, fan_out))
        b = np.zeros(fan_out) if last and zero_last else rng.uniform(-bound, bound, fan_out)
        weights.append(Tensor(w, requires_grad=True))
        biases.append(Tensor(b, requires_grad=True))
    cond_weights = []
    if conditional_dim:
        b0 = 1.0 / np.sqrt(D + conditional_dim)
        cond_weights.append(Tensor(rng.uniform(-b0, b0, (conditional_dim, hidden_sizes[0])), requires_grad=True))
        bl = 1.0 / np.sqrt(hidden_sizes[-1] + conditional_dim)
        wl = np.zeros((conditional_dim, D * output_multiplier)) if zero_last else \
            rng.uniform(-bl, bl, (conditional_dim, D * output_multiplier))
        cond_weights.append(Tensor(wl, requires_grad=True))
    net = MadeNetwork(D, hidden_sizes, output_multiplier, conditional_dim,
                      weights, biases, masks, degrees, cond_weights)
    if skip:
        net.skip_mask = skip_mask(D, output_multiplier)
        net.skip_weight = Tensor(np.zeros((D, D * output_multiplier)), requires_grad=True)
    return net


def made_forward(net: MadeNetwork, x, cond=None, masked=None) -> Tensor:
    """Output of shape [batch, D * multiplier]; head block k occupies columns k*D:(k+1)*D."""
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"expected [batch, {net.input_dim}] input, got {x.shape}")
    if net.conditional_dim and cond is None:
        raise ContractError("network is conditional; cond is required")
    if cond is not None:
        cond = ad.as_tensor(cond)
        if cond.ndim != 2 or cond.shape[1] != net.conditional_dim:
            raise DimensionError(f"expected [batch, {net.conditional_dim}] cond, got {cond.shape}")
    ws = net.masked_weights() if masked is None else masked
    n_layers = len(net.weights)
    h = x
    for l in range(n_layers):
        a = h @ ws[l] + net.biases[l]
        if cond is not None and l == 0:
            a = a + cond @ net.cond_weights[0]
        if cond is not None and l == n_layers - 1:
            a = a + cond @ net.cond_weights[1]
        h = a if l == n_layers - 1 else ad.tanh(a)
    if net.skip_weight is not None:
        h = h + x @ ws[n_layers]
    return h


def connectivity(net: MadeNetwork) -> np.ndarray:
    """Boolean [D_in, D_out] reachability through the mask product."""
    reach = net.masks[0] > 0
    for m in net.masks[1:]:
        reach = (reach.astype(np.int64) @ (m > 0).astype(np.int64)) > 0
    return reach


def to_dict(net: MadeNetwork) -> dict:
    return {
        "input_dim": net.input_dim,
        "hidden_sizes": list(net.hidden_sizes),
        "output_multiplier": net.output_multiplier,
        "conditional_dim": net.conditional_dim,
        "weights": [w.data.tolist() for w in net.weights],
        "biases": [b.data.tolist() for b in net.biases],
        "masks": [m.astype(int).tolist() for m in net.masks],
        "degrees": [d.tolist() for d in net.degrees],
        "cond_weights": [w.data.tolist() for w in net.cond_weights],
    }


def from_dict(d: dict) -> MadeNetwork:
    masks, degrees = build_masks(d["input_dim"], d["hidden_sizes"], d["output_multiplier"])
    stored = [np.asarray(m, dtype=np.float64) for m in d["masks"]]
    if any(a.shape != b.shape or np.any(a != b) for a, b in zip(masks, stored)):
        raise ContractError("stored masks do not match the autoregressive degree rule")
    return MadeNetwork(
        d["input_dim"], list(d["hidden_sizes"]), d["output_multiplier"], d["conditional_dim"],
        [Tensor(np.asarray(w, dtype=np.float64).reshape(m.shape), requires_grad=True)
         for w, m in zip(d["weights"], masks)],
        [Tensor(np.asarray(b, dtype=np.float64), requires_grad=True) for b in d["biases"]],
        masks, degrees,
        [Tensor(np.asarray(w, dtype=np.float64), requires_grad=True) for w in d["cond_weights"]],
    )
