# %% [markdown]
# # Parameter and FLOP accounting
#
# Counts are analytic: a multiply-accumulate is 2 FLOPs, elementwise work is
# 1 FLOP per element, softmax 4 and layer norm 7 per element. Ratios between
# grouped operators and their ungrouped twins do not depend on these constants.

# %%
from lightcts import tensor as T
from lightcts.model import LightCtsModel, ModelConfig, forward
from lightcts.profiler import full_shot_glformer_flops, profile, scaling_check, twin_ratios

import numpy as np

cfg = ModelConfig(n_nodes=170, d_model=64, dilations=(1, 2, 4, 8), tcn_groups=4, n_blocks=4, mha_groups=2, ffn_groups=2, se_ratio=8)
report = profile(cfg)
print(report.to_table())

# %% [markdown]
# The analytic MAC count agrees with a trace of the matrix products issued
# by a real forward pass.

# %%
small = ModelConfig(n_nodes=7, d_model=16, se_ratio=4)
model = LightCtsModel(small, mask=np.ones((7, 7), dtype=bool))
with T.count_macs() as traced:
    forward(np.zeros((7, 12, 1)), model)
print(traced[0], profile(small).mac_flops)

# %% [markdown]
# ## Grouped operators against their twins

# %%
for op, r in twin_ratios(cfg).items():
    print(f"{op:6s} params {r['params']}  FLOPs {r['flops']}")

# %% [markdown]
# ## Scaling
#
# Log-log slopes of counted multiply-accumulate FLOPs.

# %%
base = ModelConfig(n_nodes=10, d_model=16, se_ratio=4)
for vary, values, target in (
    ("d_model", [16, 32, 64], "T-operators"),
    ("history", [12, 24, 48], "T-operators"),
    ("n_nodes", [10, 20, 40], "attention-scores"),
):
    res = scaling_check(base, vary, values, target)
    print(f"{target} vs {vary}: slope {res.slope:.4f}")

# %% [markdown]
# ## What the last-shot compression saves

# %%
s_ops = report.select("S-operators").flops
print(f"S-operators: {s_ops:,} FLOPs; uncompressed input would cost {full_shot_glformer_flops(cfg):,}")
