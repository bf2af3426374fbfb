# %% [markdown]
# # Parameter study
#
# One short training run per sweep value. Each row lists the parameter count,
# FLOPs and validation errors. Every sweep value is validated before any
# training starts.

# %%
from dataclasses import replace

from lightcts import workbench as wb
from lightcts.config import RunConfig
from lightcts.errors import ConfigError

base = RunConfig(synth_n=6, synth_t=600, d_model=16, attn_blocks=2, batch_size=32, study_epochs=2, out="runs/study")

for sweep, values in (("G^T", (1, 2, 4)), ("D", (16, 32)), ("L_S", (0, 2))):
    rows = wb.cmd_study(replace(base, study_sweep=sweep, study_values=values, se_ratio=4))
    print(f"sweep {sweep}")
    print(wb.rows_to_table(rows))

# %%
try:
    wb.cmd_study(replace(base, study_sweep="G^T", study_values=(2, 3)))
except ConfigError as e:
    print("rejected:", e)
