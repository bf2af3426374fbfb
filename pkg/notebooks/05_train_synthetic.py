# %% [markdown]
# # Training on synthetic coupled sinusoids
#
# Eight series, each a sinusoid mixed with the previous values of its
# neighbours in a random graph. The graph doubles as the attention mask.
# The forecast is compared with persistence (repeat the last observed value).

# %%
import numpy as np

from lightcts import workbench as wb
from lightcts.config import RunConfig
from lightcts.training import evaluate, persistence_forecast

run = RunConfig(synth_n=8, synth_t=2000, d_model=16, attn_blocks=2, epochs=10, batch_size=32, out="runs/demo")
prep = wb.prepare(run)
print("windows (train, val, test):", len(prep.train[0]), len(prep.val[0]), len(prep.test[0]))
print("mask:\n", prep.mask.astype(int))

# %% [markdown]
# A short run; the acceptance suite trains for 40 epochs.

# %%
result = wb.fit(run, prep, on_epoch=lambda r: print(f"epoch {r.epoch:2d}  train {r.train_mae:.4f}  val {r.val_mae:.4f}"))
print("best epoch", result.best_epoch)

# %%
model_report = wb.score(result.model, prep, prep.test[0], prep.raw_test_y, run.mode)
naive = prep.normalizer.denormalize_feature(persistence_forecast(prep.test[0], run.horizon), 0)
base = evaluate(naive, prep.raw_test_y)
print(f"test MAE model {model_report.mae:.4f}  persistence {base.mae:.4f}")
for row in wb.metric_rows(model_report, run.mode, run.horizon):
    print(row)
