"""GL-Former: alternating global and adjacency-masked local attention blocks
with channel-grouped attention (L-MHA) and grouped second FFN layer (L-FFN)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

GLOBAL, LOCAL = "global", "local"


def default_pattern(n_blocks: int) -> tuple[str, ...]:
    return tuple(GLOBAL if i % 2 == 0 else LOCAL for i in range(n_blocks))


@dataclass(frozen=True)
class GlFormerConfig:
    d_model: int = 64
    n_blocks: int = 4
    heads: int = 4
    mha_groups: int = 2
    ffn_groups: int = 2
    d_ff: int | None = None
    pattern: tuple[str, ...] | None = None
    ln_eps: float = 1e-5

    @property
    def hidden(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @property
    def blocks(self) -> tuple[str, ...]:
        return self.pattern if self.pattern is not None else default_pattern(self.n_blocks)

    def validate(self) -> None:
        d, gm, gf, h = self.d_model, self.mha_groups, self.ffn_groups, self.heads
        if min(d, gm, gf, h, self.hidden) < 1 or self.n_blocks < 0:
            raise ConfigError("d_model, heads, mha_groups, ffn_groups and d_ff must be positive")
        if d % gm:
            raise ConfigError(f"d_model={d} is not divisible by mha_groups={gm}")
        if (d // gm) % h:
            raise ConfigError(f"channels per MHA group d_model/mha_groups={d // gm} is not divisible by heads={h}")
        if d % gf:
            raise ConfigError(f"d_model={d} is not divisible by ffn_groups={gf}")
        if self.hidden % gf:
            raise ConfigError(f"d_ff={self.hidden} is not divisible by ffn_groups={gf}")
        if len(self.blocks) != self.n_blocks:
            raise ConfigError(f"pattern has {len(self.blocks)} entries but n_blocks={self.n_blocks}")
        bad = [k for k in self.blocks if k not in (GLOBAL, LOCAL)]
        if bad:
            raise ConfigError(f"pattern entries must be 'global' or 'local', got {bad}")


@dataclass
class AttentionBlockParams:
    """Weights of one attention block.

    ``wq[j]`` is the ``Dg x Dg`` query projection of channel group ``j``; its
    column block ``i`` of width ``Dg/h`` is head ``i``'s projection. ``w2[j]``
    maps hidden slice ``j`` (width ``D'/G^F``) to output slice ``j``.
    """

    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    ln1_g: Tensor
    ln1_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: list[Tensor]
    b2: Tensor
    ln2_g: Tensor
    ln2_b: Tensor

    def named(self):
        for name in ("wq", "wk", "wv"):
            for j, w in enumerate(getattr(self, name)):
                yield f"{name}{j}", w
        yield "ln1_g", self.ln1_g
        yield "ln1_b", self.ln1_b
        yield "w1", self.w1
        yield "b1", self.b1
        for j, w in enumerate(self.w2):
            yield f"w2_{j}", w
        yield "b2", self.b2
        yield "ln2_g", self.ln2_g
        yield "ln2_b", self.ln2_b


def positional_encode(h_t, w_pe) -> Tensor:
    if tuple(h_t.shape[-2:]) != tuple(w_pe.shape):
        raise ShapeError(
            f"positional encoding mismatch: features are {tuple(h_t.shape[-2:])} (N x D) "
            f"but the encoding is {tuple(w_pe.shape)}"
        )
    return T.add(h_t, w_pe)


def mha(x, wq, wk, wv, heads: int, mask=None, return_weights: bool = False):
    """Multi-head self-attention over the node axis without output projection.

    ``x`` is ``[..., N, Dg]``. Scores are scaled by ``1/sqrt(Dg/heads)``;
    where ``mask`` is False the score becomes ``-inf`` before the softmax.
    """
    n, dg = x.shape[-2], x.shape[-1]
    if dg % heads:
        raise ShapeError(f"width {dg} is not divisible by {heads} heads")
    dk = dg // heads
    lead = tuple(x.shape[:-2])

    def split_heads(t):
        return T.transpose(T.reshape(t, lead + (n, heads, dk)), _head_axes(len(lead)))

    q = split_heads(T.matmul(x, wq))
    k = split_heads(T.matmul(x, wk))
    v = split_heads(T.matmul(x, wv))
    scores = T.scale(T.matmul(q, k.mT), 1.0 / math.sqrt(dk))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n, n):
            raise ShapeError(f"mask shape {mask.shape} does not match {n} nodes")
        scores = T.masked_fill_neginf(scores, mask)
    weights = T.softmax_rows(scores)
    out = T.matmul(weights, v)  # [..., h, N, dk]
    out = T.reshape(T.transpose(out, _head_axes(len(lead))), lead + (n, dg))
    return (out, weights) if return_weights else out


def _head_axes(n_lead: int) -> tuple[int, ...]:
    # swaps the node and head axes: [..., a, b, dk] -> [..., b, a, dk]
    lead = tuple(range(n_lead))
    return lead + (n_lead + 1, n_lead, n_lead + 2)


def l_mha(x, wq: Sequence, wk: Sequence, wv: Sequence, heads: int, mask=None) -> Tensor:
    """Split channels into ``len(wq)`` consecutive groups and run :func:`mha` on each."""
    groups = len(wq)
    d = x.shape[-1]
    if d % groups:
        raise ShapeError(f"width {d} is not divisible by {groups} groups")
    dg = d // groups
    parts = [mha(x[..., j * dg : (j + 1) * dg], wq[j], wk[j], wv[j], heads, mask) for j in range(groups)]
    return T.concat(parts, axis=-1)


def ffn(x, w1, b1, w2, b2) -> Tensor:
    """Standard two-layer feed-forward network."""
    return T.add(T.matmul(T.relu(T.add(T.matmul(x, w1), b1)), w2), b2)


def l_ffn(x, w1, b1, w2: Sequence, b2) -> Tensor:
    """Full first layer, channel-grouped second layer (``len(w2)`` groups)."""
    hidden = T.relu(T.add(T.matmul(x, w1), b1))
    groups = len(w2)
    width = hidden.shape[-1]
    if width % groups:
        raise ShapeError(f"hidden width {width} is not divisible by {groups} groups")
    hg = width // groups
    parts = [T.matmul(hidden[..., j * hg : (j + 1) * hg], w2[j]) for j in range(groups)]
    return T.add(T.concat(parts, axis=-1), b2)


def attention_block(x, p: AttentionBlockParams, kind: str, heads: int, mask=None, eps: float = 1e-5) -> Tensor:
    """Post-norm block: ``LN(x + L-MHA(x))`` then ``LN(y + L-FFN(y))``."""
    if kind == LOCAL:
        if mask is None:
            raise ConfigError("a local attention block requires a mask")
        att = l_mha(x, p.wq, p.wk, p.wv, heads, mask)
    elif kind == GLOBAL:
        att = l_mha(x, p.wq, p.wk, p.wv, heads, None)
    else:
        raise ConfigError(f"unknown block kind {kind!r}")
    y = T.layer_norm(T.add(x, att), p.ln1_g, p.ln1_b, eps)
    return T.layer_norm(T.add(y, l_ffn(y, p.w1, p.b1, p.w2, p.b2)), p.ln2_g, p.ln2_b, eps)


def gl_former(h_t, cfg: GlFormerConfig, w_pe, blocks: Sequence[AttentionBlockParams], mask=None) -> Tensor:
    pattern = cfg.blocks
    if len(blocks) != len(pattern):
        raise ConfigError(f"{len(blocks)} block parameter sets for a pattern of length {len(pattern)}")
    if LOCAL in pattern and mask is None:
        raise ConfigError("pattern contains local blocks but no mask was given")
    x = positional_encode(h_t, w_pe)
    for kind, p in zip(pattern, blocks):
        x = attention_block(x, p, kind, cfg.heads, mask, cfg.ln_eps)
    return x


def init_block(rng: np.random.Generator, cfg: GlFormerConfig) -> AttentionBlockParams:
    d, gm, gf, dff = cfg.d_model, cfg.mha_groups, cfg.ffn_groups, cfg.hidden
    dg = d // gm

    def u(shape, fan_in):
        b = math.sqrt(1.0 / fan_in)
        return Tensor(rng.uniform(-b, b, shape), requires_grad=True)

    wq = [u((dg, dg), dg) for _ in range(gm)]
    wk = [u((dg, dg), dg) for _ in range(gm)]
    wv = [u((dg, dg), dg) for _ in range(gm)]
    return AttentionBlockParams(
        wq=wq,
        wk=wk,
        wv=wv,
        ln1_g=Tensor(np.ones(d), requires_grad=True),
        ln1_b=Tensor(np.zeros(d), requires_grad=True),
        w1=u((d, dff), d),
        b1=u((dff,), d),
        w2=[u((dff // gf, d // gf), dff // gf) for _ in range(gf)],
        b2=u((d,), dff // gf),
        ln2_g=Tensor(np.ones(d), requires_grad=True),
        ln2_b=Tensor(np.zeros(d), requires_grad=True),
    )


def init_positional(rng: np.random.Generator, n_nodes: int, d_model: int) -> Tensor:
    b = math.sqrt(1.0 / d_model)
    return Tensor(rng.uniform(-b, b, (n_nodes, d_model)), requires_grad=True)
