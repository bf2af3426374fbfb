# %% [markdown]
# # Reverse-mode autodiff on numpy
#
# Every model operation is built from `lightcts.tensor`. A `Tensor` wraps a
# float64 array; operations on tensors that require gradients record their
# inputs and a local gradient rule, and `backward` walks that graph in reverse
# topological order.

# %%
import numpy as np

from lightcts import tensor as T
from lightcts.tensor import Tensor

x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
loss = T.sum_(T.mul(x, x))
(g,) = T.backward(loss, [x])
print("d/dx sum(x^2) =", g)

# %% [markdown]
# ## Checking a gradient against central differences
#
# A two-layer composition `tanh(x W1) W2` probed with a fixed random weighting
# of its outputs. The finite-difference side uses a step of 1e-5.

# %%
rng = np.random.default_rng(0)
x0, w1, w2 = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 5)), rng.uniform(-1, 1, (5, 2))
r = rng.uniform(-1, 1, (4, 2))


def f(w1_arr):
    with T.no_grad():
        return float((T.matmul(T.tanh(T.matmul(x0, w1_arr)), w2).data * r).sum())


w = Tensor(w1, requires_grad=True)
out = T.sum_(T.mul(T.matmul(T.tanh(T.matmul(x0, w)), w2), r))
(analytic,) = T.backward(out, [w])

numeric = np.zeros_like(w1)
for idx in np.ndindex(w1.shape):
    up, down = w1.copy(), w1.copy()
    up[idx] += 1e-5
    down[idx] -= 1e-5
    numeric[idx] = (f(up) - f(down)) / 2e-5

print("max relative error:", np.max(np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)))

# %% [markdown]
# ## Dilated causal convolution
#
# Output length equals input length; step `t` only sees steps `t, t - d, ...`.
# Two taps with dilation 2 on `[1, 2, 3, 4]`:

# %%
h = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1)
w = np.array([1.0, 1.0]).reshape(1, 1, 2)  # [Dout, Din, K]; tap 0 is the current step
print(T.dilated_causal_conv1d(h, w, 2).data.ravel())

# %% [markdown]
# ## Masked softmax
#
# Masked scores become `-inf` and carry exactly zero weight.

# %%
scores = np.array([[0.3, 1.2, -0.5], [2.0, 0.1, 0.4]])
mask = np.array([[True, False, True], [True, True, False]])
print(T.softmax_rows(T.masked_fill_neginf(scores, mask)).data)
