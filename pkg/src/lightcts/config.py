"""Run configuration: flat ``key=value`` text with typed parsing.

Blank lines and ``#`` comments are ignored. Sequences are comma separated,
``none`` clears an optional value. Every upstream constraint is checked by
:meth:`RunConfig.validate` before any data is read or any model is built.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .data import SplitSpec, split_lengths
from .errors import ConfigError
from .model import ModelConfig
from .synth import SynthSpec
from .training import TrainConfig

SWEEPS = {"d_model": "d_model", "D": "d_model", "tcn_groups": "tcn_groups", "G^T": "tcn_groups", "attn_blocks": "attn_blocks", "L_S": "attn_blocks"}

_TUPLE_INT = {"dilations", "study_values"}
_TUPLE_STR = {"pattern"}
_OPTIONAL_INT = {"d_ff", "d_head", "patience", "tcn_layers"}
_OPTIONAL_FLOAT = {"clip"}
_OPTIONAL_STR = {"data", "checkpoint"}


@dataclass(frozen=True)
class RunConfig:
    # data
    data: str | None = None
    synth_n: int = 8
    synth_t: int = 2000
    synth_f: int = 1
    synth_density: float = 0.3
    synth_noise: float = 0.05
    synth_coupling: float = 0.3
    synth_kind: str = "coupled-sinusoids"
    synth_seed: int = 0
    split: str = "6:2:2"
    mode: str = "multi"
    history: int = 12
    horizon: int = 12
    # model
    d_model: int = 64
    kernel_size: int = 2
    tcn_layers: int | None = None
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    tcn_groups: int = 4
    se_ratio: int = 8
    attn_blocks: int = 4
    pattern: tuple[str, ...] | None = None
    heads: int = 4
    mha_groups: int = 2
    ffn_groups: int = 2
    d_ff: int | None = None
    d_head: int | None = None
    # training
    lr: float = 0.002
    epochs: int = 250
    batch_size: int = 64
    clip: float | None = None
    patience: int | None = None
    # study
    study_sweep: str = "d_model"
    study_values: tuple[int, ...] = ()
    study_epochs: int = 30
    # run
    checkpoint: str | None = None
    out: str = "runs"
    seed: int = 0

    # ------------------------------------------------------------ derived

    @property
    def layer_dilations(self) -> tuple[int, ...]:
        if self.tcn_layers is None:
            return tuple(self.dilations)
        return tuple(2**i for i in range(self.tcn_layers))

    @property
    def out_len(self) -> int:
        return self.horizon if self.mode == "multi" else 1

    def model_config(self, n_nodes: int, in_features: int) -> ModelConfig:
        d_head = self.d_head if self.d_head is not None else (512 if self.mode == "multi" else self.d_model)
        return ModelConfig(
            n_nodes=n_nodes,
            in_features=in_features,
            history=self.history,
            horizon=self.out_len,
            d_model=self.d_model,
            kernel_size=self.kernel_size,
            dilations=self.layer_dilations,
            tcn_groups=self.tcn_groups,
            se_ratio=self.se_ratio,
            n_blocks=self.attn_blocks,
            pattern=self.pattern,
            heads=self.heads,
            mha_groups=self.mha_groups,
            ffn_groups=self.ffn_groups,
            d_ff=self.d_ff,
            d_head=d_head,
        )

    def train_config(self, epochs: int | None = None) -> TrainConfig:
        return TrainConfig(self.lr, epochs or self.epochs, self.batch_size, self.seed, self.clip, self.patience)

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            n=self.synth_n,
            t=self.synth_t,
            f=self.synth_f,
            density=self.synth_density,
            noise=self.synth_noise,
            seed=self.synth_seed,
            kind=self.synth_kind,
            coupling=self.synth_coupling,
        )

    def split_spec(self) -> SplitSpec:
        try:
            return SplitSpec.from_ratio(self.split)
        except ValueError as e:
            raise ConfigError(f"split {self.split!r}: {e}") from None

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else self.out_dir / "checkpoint.lcts"

    # --------------------------------------------------------- validation

    def validate(self, n_nodes: int | None = None, in_features: int | None = None, n_steps: int | None = None) -> None:
        """Raise :class:`ConfigError` naming the first violated constraint.

        Data-dependent sizes default to the synth settings when no dataset
        path is configured.
        """
        if self.mode not in ("single", "multi"):
            raise ConfigError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if self.history < 1 or self.horizon < 1:
            raise ConfigError(f"history and horizon must be >= 1, got P={self.history}, Q={self.horizon}")
        if self.tcn_layers is not None and self.tcn_layers < 1:
            raise ConfigError(f"tcn_layers must be >= 1, got {self.tcn_layers}")
        if self.data is None:
            self.synth_spec().validate()
            n_nodes = self.synth_n if n_nodes is None else n_nodes
            in_features = self.synth_f if in_features is None else in_features
            n_steps = self.synth_t if n_steps is None else n_steps
        self.model_config(n_nodes or 1, in_features or 1).validate()
        try:
            self.train_config()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.study_epochs < 1:
            raise ConfigError(f"study_epochs must be >= 1, got {self.study_epochs}")
        spec = self.split_spec()
        if n_steps is not None:
            need = self.history + self.horizon
            for name, n in zip(("train", "validation", "test"), split_lengths(n_steps, spec)):
                if n < need:
                    raise ConfigError(f"{name} split has {n} steps but windowing needs P+Q={need}")

    def sweep_configs(self) -> list["RunConfig"]:
        """One config per study value, all validated before returning."""
        if self.study_sweep not in SWEEPS:
            raise ConfigError(f"study_sweep must be one of {sorted(set(SWEEPS))}, got {self.study_sweep!r}")
        if len(self.study_values) < 2:
            raise ConfigError(f"a study needs at least 2 sweep values, got {len(self.study_values)}")
        key = SWEEPS[self.study_sweep]
        out = []
        for v in self.study_values:
            kw = {key: v}
            if key == "attn_blocks" and self.pattern is not None:
                kw["pattern"] = None
            c = dataclasses.replace(self, **kw)
            try:
                c.validate()
            except ConfigError as e:
                raise ConfigError(f"sweep value {key}={v} is invalid: {e}") from None
            out.append(c)
        return out

    # ---------------------------------------------------------------- text

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = "none"
            elif isinstance(v, tuple):
                s = ",".join(str(x) for x in v)
            else:
                s = str(v)
            lines.append(f"{f.name}={s}")
        return "\n".join(lines) + "\n"


def _convert(name: str, raw: str, default):
    s = raw.strip()
    if s.lower() == "none" and (name in _OPTIONAL_INT | _OPTIONAL_FLOAT | _OPTIONAL_STR | _TUPLE_STR):
        return None
    if name in _TUPLE_INT:
        return tuple(int(x) for x in s.split(",") if x.strip())
    if name in _TUPLE_STR:
        return tuple(x.strip() for x in s.split(",") if x.strip())
    if name in _OPTIONAL_INT:
        return int(s)
    if name in _OPTIONAL_FLOAT:
        return float(s)
    if name in _OPTIONAL_STR or isinstance(default, str):
        return s
    if isinstance(default, bool):
        if s.lower() not in ("true", "false"):
            raise ValueError("expected true or false")
        return s.lower() == "true"
    if isinstance(default, int):
        return int(s)
    if isinstance(default, float):
        return float(s)
    raise ValueError(f"no parser for {name}")


def parse_config(text: str, **overrides) -> RunConfig:
    defaults = RunConfig()
    names = {f.name for f in dataclasses.fields(RunConfig)}
    kw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in names:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            kw[key] = _convert(key, raw, getattr(defaults, key))
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}: {e}") from None
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**kw)


def load_config(path, **overrides) -> RunConfig:
    return parse_config(Path(path).read_text(), **overrides)
