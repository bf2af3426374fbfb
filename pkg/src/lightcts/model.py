"""Plain-stacking assembly: embedding, L-TCN, last-shot + SE, GL-Former,
two-layer output head."""
from __future__ import annotations

import dataclasses
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, FormatError, ShapeError
from .glformer import (
    AttentionBlockParams,
    GlFormerConfig,
    gl_former,
    init_block,
    init_positional,
)
from .ltcn import (
    LtcnConfig,
    LtcnLayerParams,
    SeParams,
    init_layer,
    init_se,
    last_shot_compress,
    ltcn,
    se_recalibrate,
)
from .tensor import Tensor

EMBEDDING = "embedding"
T_OPERATORS = "T-operators"
S_OPERATORS = "S-operators"
OUTPUT = "aggregation-and-output"
COMPONENTS = (EMBEDDING, T_OPERATORS, S_OPERATORS, OUTPUT)


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    in_features: int = 1
    history: int = 12
    horizon: int = 12
    d_model: int = 64
    kernel_size: int = 2
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    tcn_groups: int = 4
    se_ratio: int = 8
    conv_bias: bool = True
    n_blocks: int = 4
    pattern: tuple[str, ...] | None = None
    heads: int = 4
    mha_groups: int = 2
    ffn_groups: int = 2
    d_ff: int | None = None
    d_head: int = 512
    ln_eps: float = 1e-5

    @property
    def ltcn(self) -> LtcnConfig:
        return LtcnConfig(self.d_model, self.kernel_size, tuple(self.dilations), self.tcn_groups, self.se_ratio, self.conv_bias)

    @property
    def glformer(self) -> GlFormerConfig:
        pattern = tuple(self.pattern) if self.pattern is not None else None
        return GlFormerConfig(self.d_model, self.n_blocks, self.heads, self.mha_groups, self.ffn_groups, self.d_ff, pattern, self.ln_eps)

    def validate(self) -> None:
        if min(self.n_nodes, self.in_features, self.history, self.horizon, self.d_head) < 1:
            raise ConfigError("n_nodes, in_features, history, horizon and d_head must be >= 1")
        self.ltcn.validate(self.history)
        self.glformer.validate()

    def to_text(self) -> str:
        """Canonical ``key=value`` lines, sorted by key."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, (tuple, list)):
                s = ",".join(str(x) for x in v)
            else:
                s = repr(v)
            lines.append(f"{f.name}={s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        raw = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        kw = {}
        for f in dataclasses.fields(cls):
            if f.name not in raw:
                continue
            s = raw[f.name].strip()
            if s == "none":
                kw[f.name] = None
            elif f.name in ("dilations",):
                kw[f.name] = tuple(int(x) for x in s.split(","))
            elif f.name == "pattern":
                kw[f.name] = tuple(x for x in s.split(",") if x)
            elif f.name == "conv_bias":
                kw[f.name] = s == "true"
            elif f.name == "ln_eps":
                kw[f.name] = float(s)
            else:
                kw[f.name] = int(s)
        return cls(**kw)


@dataclass
class HeadParams:
    w1: Tensor  # [D, D_h]
    b1: Tensor
    w2: Tensor  # [D_h, L]
    b2: Tensor

    def named(self):
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2


class LightCtsModel:
    """Parameters plus structure of one forecasting model.

    Inputs are ``[..., N, P, F]`` (leading axes are batch) and outputs
    ``[..., N, L]``.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, mask: np.ndarray | None = None):
        config.validate()
        self.config = config
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        if self.mask is not None and self.mask.shape != (config.n_nodes, config.n_nodes):
            raise ShapeError(f"mask shape {self.mask.shape} does not match n_nodes={config.n_nodes}")
        rng = np.random.default_rng(seed)
        c = config
        d, f = c.d_model, c.in_features
        b = math.sqrt(1.0 / f)
        self.embed_w = Tensor(rng.uniform(-b, b, (d, f, 1)), requires_grad=True)
        self.embed_b = Tensor(rng.uniform(-b, b, (d,)), requires_grad=True)
        lc = c.ltcn
        self.ltcn_layers: list[LtcnLayerParams] = [init_layer(rng, lc) for _ in lc.dilations]
        self.se: SeParams = init_se(rng, lc)
        self.pe = init_positional(rng, c.n_nodes, d)
        gc = c.glformer
        self.blocks: list[AttentionBlockParams] = [init_block(rng, gc) for _ in range(gc.n_blocks)]
        bd, bh = math.sqrt(1.0 / d), math.sqrt(1.0 / c.d_head)
        self.head = HeadParams(
            Tensor(rng.uniform(-bd, bd, (d, c.d_head)), requires_grad=True),
            Tensor(rng.uniform(-bd, bd, (c.d_head,)), requires_grad=True),
            Tensor(rng.uniform(-bh, bh, (c.d_head, c.horizon)), requires_grad=True),
            Tensor(rng.uniform(-bh, bh, (c.horizon,)), requires_grad=True),
        )
        if _has_local(gc) and self.mask is None:
            # no adjacency: local blocks see every node
            self.mask = np.ones((c.n_nodes, c.n_nodes), dtype=bool)

    def named_parameters(self) -> Iterator[tuple[str, str, Tensor]]:
        """``(name, component, tensor)`` in registration order."""
        yield "embed.w", EMBEDDING, self.embed_w
        yield "embed.b", EMBEDDING, self.embed_b
        for i, layer in enumerate(self.ltcn_layers):
            for n, t in layer.named():
                yield f"ltcn{i}.{n}", T_OPERATORS, t
        for n, t in self.se.named():
            yield f"se.{n}", T_OPERATORS, t
        yield "pe", S_OPERATORS, self.pe
        for i, blk in enumerate(self.blocks):
            for n, t in blk.named():
                yield f"block{i}.{n}", S_OPERATORS, t
        for n, t in self.head.named():
            yield f"head.{n}", OUTPUT, t

    def parameters(self) -> list[Tensor]:
        return [t for _, _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, arrays) -> None:
        params = self.parameters()
        if len(arrays) != len(params):
            raise ShapeError(f"state has {len(arrays)} tensors, model has {len(params)}")
        for p, a in zip(params, arrays):
            if p.shape != a.shape:
                raise ShapeError(f"state tensor shape {a.shape} != parameter shape {p.shape}")
            p.data = np.array(a, dtype=np.float64)

    def __call__(self, x) -> Tensor:
        return forward(x, self)


def _has_local(gc: GlFormerConfig) -> bool:
    return "local" in gc.blocks


def embed(x, model: LightCtsModel) -> Tensor:
    """Pointwise (kernel 1) convolution from F input features to D channels."""
    x = T.as_tensor(x)
    f = model.config.in_features
    if x.shape[-1] != f:
        raise ShapeError(f"input has {x.shape[-1]} features, model expects F={f}")
    return T.dilated_causal_conv1d(x, model.embed_w, 1, model.embed_b)


def temporal_features(x, model: LightCtsModel) -> Tensor:
    """``H^T``: embedding, L-TCN, last-shot compression, SE."""
    h = embed(x, model)
    outs = ltcn(h, model.ltcn_layers, model.config.ltcn)
    return se_recalibrate(last_shot_compress(outs), model.se)


def output_head(h_s, h_t, head: HeadParams) -> Tensor:
    z = T.relu(T.add(T.matmul(T.add(h_s, h_t), head.w1), head.b1))
    return T.add(T.matmul(z, head.w2), head.b2)


def forward(x, model: LightCtsModel) -> Tensor:
    x = T.as_tensor(x)
    c = model.config
    if x.ndim < 3 or x.shape[-3] != c.n_nodes or x.shape[-2] != c.history:
        raise ShapeError(f"input shape {x.shape} does not match (..., N={c.n_nodes}, P={c.history}, F={c.in_features})")
    h_t = temporal_features(x, model)
    h_s = gl_former(h_t, c.glformer, model.pe, model.blocks, model.mask)
    return output_head(h_s, h_t, model.head)


def mae_loss(pred, truth) -> Tensor:
    pred, truth = T.as_tensor(pred), T.as_tensor(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {truth.shape}")
    return T.mean(T.abs_(T.sub(pred, truth)))


def predict(model: LightCtsModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Forward pass without recording, in batches along axis 0."""
    outs = []
    with T.no_grad():
        for i in range(0, x.shape[0], batch_size):
            outs.append(forward(x[i : i + batch_size], model).data)
    return np.concatenate(outs, axis=0)


# -------------------------------------------------------------- checkpoint

CKPT_MAGIC = b"LCTS"


def save_checkpoint(model: LightCtsModel, path) -> None:
    """``LCTS`` | u32 len + config text | u32 count | per tensor: u32 ndim,
    u32 dims, float64 payload | u8 has_mask [+ N*N u8 mask]."""
    cfg = model.config.to_text().encode()
    params = model.parameters()
    with open(Path(path), "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            fh.write(struct.pack("<I", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}I", *p.shape))
            fh.write(p.data.astype("<f8").tobytes(order="C"))
        if model.mask is None:
            fh.write(b"\x00")
        else:
            fh.write(b"\x01")
            fh.write(model.mask.astype(np.uint8).tobytes(order="C"))


def load_checkpoint(path) -> LightCtsModel:
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError(f"bad checkpoint magic {buf[:4]!r} at offset 0")
    off = 4
    try:
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        config = ModelConfig.from_text(buf[off : off + n].decode())
        off += n
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        arrays = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", buf, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = math.prod(shape)
            if off + 8 * size > len(buf):
                raise FormatError(f"truncated tensor payload at offset {off}")
            arrays.append(np.frombuffer(buf, "<f8", size, off).reshape(shape).astype(np.float64))
            off += 8 * size
        has_mask = buf[off]
        off += 1
    except (struct.error, IndexError):
        raise FormatError(f"truncated checkpoint at offset {off}") from None
    mask = None
    if has_mask:
        nn = config.n_nodes
        if off + nn * nn > len(buf):
            raise FormatError(f"truncated mask at offset {off}")
        mask = np.frombuffer(buf, np.uint8, nn * nn, off).reshape(nn, nn).astype(bool)
    model = LightCtsModel(config, seed=0, mask=mask)
    model.load_state(arrays)
    return model
