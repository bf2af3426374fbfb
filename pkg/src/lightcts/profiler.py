"""Analytic parameter and FLOP accounting.

Counting conventions (one forward pass, one sample):

* multiply-accumulate = 2 FLOPs; ``[m, k] @ [k, n]`` costs ``2mkn``
* grouped causal conv costs ``2 * N * P * K * Din * Dout / G`` (padding taps
  included)
* add, multiply, scale, tanh, sigmoid, relu: 1 FLOP per output element
* softmax: 4 FLOPs per element
* layer norm: 7 FLOPs per element
* permutations, slicing, reshapes and masking: 0 FLOPs

Each :class:`OpCost` separates ``weight_params`` (weight matrices and
kernels) from biases/affine terms and ``mac_flops`` (matmul/conv) from
elementwise work, because the grouping reductions are statements about the
former.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .glformer import GlFormerConfig
from .ltcn import LtcnConfig
from .model import COMPONENTS, EMBEDDING, OUTPUT, S_OPERATORS, T_OPERATORS, LightCtsModel, ModelConfig

LAYER_NORM_FLOPS = 7
SOFTMAX_FLOPS = 4


@dataclass(frozen=True)
class OpCost:
    component: str
    op: str
    weight_params: int = 0
    other_params: int = 0
    mac_flops: int = 0
    other_flops: int = 0

    @property
    def params(self) -> int:
        return self.weight_params + self.other_params

    @property
    def flops(self) -> int:
        return self.mac_flops + self.other_flops


@dataclass(frozen=True)
class ComponentCost:
    component: str
    params: int
    flops: int
    params_pct: float
    flops_pct: float


@dataclass
class CostReport:
    ops: list[OpCost] = field(default_factory=list)

    def extend(self, ops: Iterable[OpCost]) -> "CostReport":
        self.ops.extend(ops)
        return self

    def select(self, component: str | None = None, prefix: str | None = None) -> "CostReport":
        return CostReport(
            [o for o in self.ops if (component is None or o.component == component) and (prefix is None or o.op.startswith(prefix))]
        )

    @property
    def params(self) -> int:
        return sum(o.params for o in self.ops)

    @property
    def weight_params(self) -> int:
        return sum(o.weight_params for o in self.ops)

    @property
    def flops(self) -> int:
        return sum(o.flops for o in self.ops)

    @property
    def mac_flops(self) -> int:
        return sum(o.mac_flops for o in self.ops)

    def components(self) -> list[ComponentCost]:
        tp, tf = self.params or 1, self.flops or 1
        names = [c for c in COMPONENTS if any(o.component == c for o in self.ops)]
        names += sorted({o.component for o in self.ops} - set(names))
        out = []
        for c in names:
            sub = self.select(c)
            out.append(ComponentCost(c, sub.params, sub.flops, 100.0 * sub.params / tp, 100.0 * sub.flops / tf))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "params", "flops", "params_pct", "flops_pct"])
        for c in self.components():
            w.writerow([c.component, c.params, c.flops, f"{c.params_pct:.4f}", f"{c.flops_pct:.4f}"])
        w.writerow(["total", self.params, self.flops, "100.0000", "100.0000"])
        return buf.getvalue()

    def to_table(self) -> str:
        rows = [(c.component, f"{c.params:,}", f"{c.flops:,}", f"{c.params_pct:6.2f}%", f"{c.flops_pct:6.2f}%") for c in self.components()]
        rows.append(("total", f"{self.params:,}", f"{self.flops:,}", "100.00%", "100.00%"))
        head = ("component", "params", "FLOPs", "% params", "% FLOPs")
        widths = [max(len(r[i]) for r in rows + [head]) for i in range(5)]
        fmt = "  ".join(["{:<%d}" % widths[0]] + ["{:>%d}" % w for w in widths[1:]])
        lines = [fmt.format(*head), "  ".join("-" * w for w in widths)]
        lines += [fmt.format(*r) for r in rows]
        return "\n".join(lines) + "\n"


def read_cost_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


# ---------------------------------------------------------------- op costs


def conv_cost(component, op, n, p, k, din, dout, groups=1, bias=True, lead=1) -> OpCost:
    w = dout * (din // groups) * k
    return OpCost(
        component,
        op,
        weight_params=w,
        other_params=dout if bias else 0,
        mac_flops=2 * lead * n * p * k * din * dout // groups,
        other_flops=lead * n * p * dout if bias else 0,
    )


def embedding_cost(n: int, p: int, f: int, d: int) -> list[OpCost]:
    return [conv_cost(EMBEDDING, "embed", n, p, 1, f, d)]


def ltcn_layer_cost(n: int, p: int, cfg: LtcnConfig, layer: int = 0, groups: int | None = None) -> list[OpCost]:
    g = cfg.groups if groups is None else groups
    d, k = cfg.d_model, cfg.kernel_size
    elems = n * p * d
    return [
        conv_cost(T_OPERATORS, f"ltcn{layer}.conv_o", n, p, k, d, d, g, cfg.bias),
        conv_cost(T_OPERATORS, f"ltcn{layer}.conv_g", n, p, k, d, d, g, cfg.bias),
        OpCost(T_OPERATORS, f"ltcn{layer}.gate", other_flops=3 * elems),  # tanh, sigmoid, product
    ]


def last_shot_cost(n: int, d: int, n_layers: int) -> list[OpCost]:
    return [OpCost(T_OPERATORS, "last_shot.sum", other_flops=(n_layers - 1) * n * d)]


def se_cost(n: int, cfg: LtcnConfig) -> list[OpCost]:
    d, dr = cfg.d_model, cfg.d_model // cfg.se_ratio
    return [
        OpCost(T_OPERATORS, "se.pool", other_flops=n * d),
        OpCost(T_OPERATORS, "se.squeeze", weight_params=dr * d, mac_flops=2 * d * dr, other_flops=dr),
        OpCost(T_OPERATORS, "se.excite", weight_params=d * dr, mac_flops=2 * dr * d, other_flops=d),
        OpCost(T_OPERATORS, "se.scale", other_flops=n * d),
    ]


def mha_cost(n: int, d: int, heads: int, groups: int = 1, lead: int = 1, prefix: str = "mha") -> list[OpCost]:
    """Grouped multi-head attention over ``n`` nodes on a width-``d`` input."""
    dg = d // groups
    dk = dg // heads
    nn = lead * heads * groups * n * n
    return [
        OpCost(S_OPERATORS, f"{prefix}.qkv", weight_params=3 * groups * dg * dg, mac_flops=3 * groups * 2 * lead * n * dg * dg),
        OpCost(S_OPERATORS, f"{prefix}.scores", mac_flops=2 * nn * dk, other_flops=nn),
        OpCost(S_OPERATORS, f"{prefix}.softmax", other_flops=SOFTMAX_FLOPS * nn),
        OpCost(S_OPERATORS, f"{prefix}.mix", mac_flops=2 * nn * dk),
    ]


def ffn_cost(n: int, d: int, hidden: int, groups: int = 1, lead: int = 1, prefix: str = "ffn") -> list[OpCost]:
    rows = lead * n
    return [
        OpCost(S_OPERATORS, f"{prefix}.fc1", weight_params=d * hidden, other_params=hidden, mac_flops=2 * rows * d * hidden, other_flops=2 * rows * hidden),
        OpCost(S_OPERATORS, f"{prefix}.fc2", weight_params=hidden * d // groups, other_params=d, mac_flops=2 * rows * hidden * d // groups, other_flops=rows * d),
    ]


def block_cost(n: int, cfg: GlFormerConfig, index: int = 0, lead: int = 1) -> list[OpCost]:
    d = cfg.d_model
    elems = lead * n * d
    pre = f"block{index}"
    ops = mha_cost(n, d, cfg.heads, cfg.mha_groups, lead, f"{pre}.mha")
    ops.append(OpCost(S_OPERATORS, f"{pre}.norm1", other_params=2 * d, other_flops=elems + LAYER_NORM_FLOPS * elems))
    ops += ffn_cost(n, d, cfg.hidden, cfg.ffn_groups, lead, f"{pre}.ffn")
    ops.append(OpCost(S_OPERATORS, f"{pre}.norm2", other_params=2 * d, other_flops=elems + LAYER_NORM_FLOPS * elems))
    return ops


def glformer_cost(n: int, cfg: GlFormerConfig, lead: int = 1) -> list[OpCost]:
    """``lead`` > 1 prices running the same stack on ``lead`` independent
    ``N x D`` slices (e.g. every time step of an uncompressed map)."""
    ops = [OpCost(S_OPERATORS, "pe", other_params=n * cfg.d_model, other_flops=lead * n * cfg.d_model)]
    for i in range(cfg.n_blocks):
        ops += block_cost(n, cfg, i, lead)
    return ops


def head_cost(n: int, d: int, d_head: int, horizon: int) -> list[OpCost]:
    return [
        OpCost(OUTPUT, "head.sum", other_flops=n * d),
        OpCost(OUTPUT, "head.fc1", weight_params=d * d_head, other_params=d_head, mac_flops=2 * n * d * d_head, other_flops=2 * n * d_head),
        OpCost(OUTPUT, "head.fc2", weight_params=d_head * horizon, other_params=horizon, mac_flops=2 * n * d_head * horizon, other_flops=n * horizon),
    ]


# --------------------------------------------------------------- model level


def _config(model) -> ModelConfig:
    return model.config if isinstance(model, LightCtsModel) else model


def profile(model, input_shape: Sequence[int] | None = None) -> CostReport:
    """Full cost report for ``model`` (a :class:`LightCtsModel` or a
    :class:`ModelConfig`) at input shape ``(N, P, F)``."""
    c = _config(model)
    n, p, f = tuple(input_shape) if input_shape is not None else (c.n_nodes, c.history, c.in_features)
    if n != c.n_nodes or f != c.in_features:
        raise ConfigError(f"input shape {(n, p, f)} does not match model N={c.n_nodes}, F={c.in_features}")
    lc, gc = c.ltcn, c.glformer
    rep = CostReport()
    rep.extend(embedding_cost(n, p, f, c.d_model))
    for i in range(lc.n_layers):
        rep.extend(ltcn_layer_cost(n, p, lc, i))
    rep.extend(last_shot_cost(n, c.d_model, lc.n_layers))
    rep.extend(se_cost(n, lc))
    rep.extend(glformer_cost(n, gc))
    rep.extend(head_cost(n, c.d_model, c.d_head, c.horizon))
    return rep


def count_params(model) -> CostReport:
    """Parameter side of :func:`profile` (FLOP fields are also populated)."""
    return profile(model)


def count_flops(model, input_shape: Sequence[int]) -> CostReport:
    return profile(model, input_shape)


def enumerate_params(model: LightCtsModel) -> dict[str, int]:
    """Element counts of every registered tensor, per component."""
    out = {c: 0 for c in COMPONENTS}
    for _, comp, t in model.named_parameters():
        out[comp] += t.size
    return out


# ------------------------------------------------------------------ scaling


@dataclass(frozen=True)
class ScalingResult:
    vary: str
    target: str
    values: tuple[int, ...]
    flops: tuple[int, ...]
    slope: float


TARGETS = ("T-operators", "S-operators", "attention-scores", "total")
VARIABLES = ("d_model", "tcn_groups", "mha_groups", "history", "n_nodes")


def _target_flops(c: ModelConfig, target: str, mac_only: bool) -> int:
    rep = profile(c)
    if target == "attention-scores":
        ops = [o for o in rep.ops if o.op.endswith(".scores")]
        return sum(o.mac_flops if mac_only else o.flops for o in ops)
    if target != "total":
        rep = rep.select(target)
    return rep.mac_flops if mac_only else rep.flops


def scaling_check(base: ModelConfig, vary: str, values: Sequence[int], target: str = "T-operators", mac_only: bool = True) -> ScalingResult:
    """Log-log slope of counted FLOPs of ``target`` against ``vary``.

    ``mac_only`` restricts the count to multiply-accumulate work, the term the
    big-O complexities describe.
    """
    if len(values) < 3:
        raise ConfigError(f"scaling_check needs at least 3 values, got {len(values)}")
    if vary not in VARIABLES:
        raise ConfigError(f"cannot vary {vary!r}; choose from {VARIABLES}")
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}; choose from {TARGETS}")
    flops = []
    for v in values:
        c = replace(base, **{vary: int(v)})
        if vary == "history":
            c.ltcn.validate(None)
        else:
            c.validate()
        flops.append(_target_flops(c, target, mac_only))
    slope = float(np.polyfit(np.log(values), np.log(flops), 1)[0])
    return ScalingResult(vary, target, tuple(int(v) for v in values), tuple(flops), slope)


def full_shot_glformer_flops(c: ModelConfig) -> int:
    """S-operator FLOPs if the uncompressed ``N x P x D`` map were fed in."""
    return sum(o.flops for o in glformer_cost(c.n_nodes, c.glformer, lead=c.history))


def twin_ratios(c: ModelConfig) -> dict[str, dict[str, Fraction]]:
    """Weight-parameter and MAC-FLOP ratios of each grouped operator against
    its ungrouped twin at equal width.

    For attention the FLOP ratio covers the Q/K/V projections: with the same
    head count per group, the score and mixing products cost ``2 N^2 D`` with
    or without grouping.
    """
    n, p, d = c.n_nodes, c.history, c.d_model
    lc, gc = c.ltcn, c.glformer

    def ratio(a: list[OpCost], b: list[OpCost]) -> dict[str, Fraction]:
        ra, rb = CostReport(a), CostReport(b)
        return {"params": Fraction(ra.weight_params, rb.weight_params), "flops": Fraction(ra.mac_flops, rb.mac_flops)}

    def qkv(ops):
        return [o for o in ops if o.op.endswith(".qkv")]

    return {
        "L-TCN": ratio(ltcn_layer_cost(n, p, lc), ltcn_layer_cost(n, p, lc, groups=1)),
        "L-MHA": ratio(qkv(mha_cost(n, d, gc.heads, gc.mha_groups)), qkv(mha_cost(n, d, gc.heads, 1))),
        "L-FFN": ratio(ffn_cost(n, d, gc.hidden, gc.ffn_groups), ffn_cost(n, d, gc.hidden, 1)),
    }
