"""Light temporal convolution: shuffled group TCN layers, last-shot
compression and squeeze-and-excitation recalibration."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class LtcnConfig:
    d_model: int = 64
    kernel_size: int = 2
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    groups: int = 4
    se_ratio: int = 8
    bias: bool = True

    @property
    def n_layers(self) -> int:
        return len(self.dilations)

    def validate(self, history: int | None = None) -> None:
        d, g = self.d_model, self.groups
        if d < 1 or self.kernel_size < 1 or g < 1 or self.se_ratio < 1:
            raise ConfigError("d_model, kernel_size, tcn_groups and se_ratio must be positive")
        if not self.dilations or min(self.dilations) < 1:
            raise ConfigError(f"dilations must be a non-empty list of positive ints, got {self.dilations}")
        if d % g:
            raise ConfigError(f"d_model={d} is not divisible by tcn_groups={g}")
        if (d // g) % g:
            raise ConfigError(f"channels per TCN group d_model/tcn_groups={d // g} is not divisible by tcn_groups={g}")
        if d % self.se_ratio:
            raise ConfigError(f"d_model={d} is not divisible by se_ratio={self.se_ratio}")
        if history is not None and receptive_field(self) < history:
            raise ConfigError(
                f"receptive field {receptive_field(self)} of kernel_size={self.kernel_size}, "
                f"dilations={list(self.dilations)} does not cover history P={history}"
            )


def receptive_field(cfg: LtcnConfig) -> int:
    return 1 + (cfg.kernel_size - 1) * sum(cfg.dilations)


@dataclass
class LtcnLayerParams:
    w_o: Tensor  # [D, D/G, K]
    w_g: Tensor
    b_o: Tensor | None = None
    b_g: Tensor | None = None

    def named(self):
        yield "w_o", self.w_o
        if self.b_o is not None:
            yield "b_o", self.b_o
        yield "w_g", self.w_g
        if self.b_g is not None:
            yield "b_g", self.b_g


@dataclass
class SeParams:
    w_s1: Tensor  # [D/r, D]
    w_s2: Tensor  # [D, D/r]

    def named(self):
        yield "w_s1", self.w_s1
        yield "w_s2", self.w_s2


def shuffle_permutation(d: int, groups: int) -> np.ndarray:
    """Transpose of the ``groups x d/groups`` channel grid.

    Output channel ``j`` reads input channel ``(j % G) * (d/G) + j // G``, so
    every output group receives channels from every input group.
    """
    if groups < 1 or d % groups:
        raise ShapeError(f"{d} channels cannot be split into {groups} groups")
    j = np.arange(d)
    return (j % groups) * (d // groups) + j // groups


def group_shuffle(h, groups: int) -> Tensor:
    return T.permute_last(h, shuffle_permutation(h.shape[-1], groups))


def sgtcn(h, w, dilation: int, groups: int, bias=None) -> Tensor:
    """Shuffled group TCN branch: channel shuffle, then grouped causal conv."""
    return T.dilated_causal_conv1d(group_shuffle(h, groups), w, dilation, bias, groups)


def ltcn_layer(h, layer: LtcnLayerParams, dilation: int, groups: int) -> Tensor:
    """Gated layer ``tanh(branch_o) * sigmoid(branch_g)``."""
    o = sgtcn(h, layer.w_o, dilation, groups, layer.b_o)
    g = sgtcn(h, layer.w_g, dilation, groups, layer.b_g)
    return T.mul(T.tanh(o), T.sigmoid(g))


def ltcn(h, layers: Sequence[LtcnLayerParams], cfg: LtcnConfig) -> list[Tensor]:
    """Run the stacked layers and return every layer's output."""
    outs = []
    for layer, dil in zip(layers, cfg.dilations):
        h = ltcn_layer(h, layer, dil, cfg.groups)
        outs.append(h)
    return outs


def last_shot_compress(layer_outputs: Sequence) -> Tensor:
    """Sum of the final-time-step slices: ``[..., N, P, D]`` -> ``[..., N, D]``."""
    if not layer_outputs:
        raise ShapeError("last_shot_compress needs at least one layer output")
    shape = layer_outputs[0].shape
    for o in layer_outputs:
        if o.shape != shape:
            raise ShapeError(f"layer outputs disagree in shape: {shape} vs {o.shape}")
    total = layer_outputs[0][..., -1, :]
    for o in layer_outputs[1:]:
        total = T.add(total, o[..., -1, :])
    return total


def se_recalibrate(h, se: SeParams) -> Tensor:
    """Squeeze-and-excitation over the node axis.

    ``h`` is ``[..., N, D]``; the descriptor is the mean over ``N`` and the
    resulting length-``D`` attention vector rescales every node's row.
    """
    d = h.shape[-1]
    if se.w_s1.ndim != 2 or se.w_s1.shape[1] != d or se.w_s2.shape != (d, se.w_s1.shape[0]):
        raise ShapeError(f"SE weights {se.w_s1.shape}, {se.w_s2.shape} do not fit features of width {d}")
    pooled = T.mean(h, axis=-2, keepdims=True)
    z = T.relu(T.matmul(pooled, se.w_s1.mT))
    att = T.sigmoid(T.matmul(z, se.w_s2.mT))
    return T.mul(h, att)


def init_layer(rng: np.random.Generator, cfg: LtcnConfig) -> LtcnLayerParams:
    d, g, k = cfg.d_model, cfg.groups, cfg.kernel_size
    bound = np.sqrt(1.0 / ((d // g) * k))

    def u(shape):
        return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

    w_o = u((d, d // g, k))
    b_o = u((d,)) if cfg.bias else None
    w_g = u((d, d // g, k))
    b_g = u((d,)) if cfg.bias else None
    return LtcnLayerParams(w_o, w_g, b_o, b_g)


def init_se(rng: np.random.Generator, cfg: LtcnConfig) -> SeParams:
    d, dr = cfg.d_model, cfg.d_model // cfg.se_ratio
    w1 = rng.uniform(-np.sqrt(1.0 / d), np.sqrt(1.0 / d), (dr, d))
    w2 = rng.uniform(-np.sqrt(1.0 / dr), np.sqrt(1.0 / dr), (d, dr))
    return SeParams(Tensor(w1, requires_grad=True), Tensor(w2, requires_grad=True))
