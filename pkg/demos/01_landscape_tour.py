"""A walk through the loss landscape of the two-parameter model.

Run with ``python3 demos/01_landscape_tour.py``.
"""

# %%
import math

import numpy as np

from markovgf import SwitchKernel, entropy_rate, marginal_entropy
from markovgf.canonical import (
    INV_SQRT2,
    classify_critical,
    energy,
    global_min_point,
    grad,
    loss,
    optimal_bias,
)

# %% [markdown]
# A binary chain that mostly switches (p = q = 0.9) and one that mostly
# stays put (p = q = 0.1). Both have a uniform stationary law, so the best
# constant predictor pays log 2 per bit. Knowing the previous bit helps more
# the further p + q is from 1.

# %%
for p in (0.9, 0.1):
    k = SwitchKernel(p, p)
    print(f"p=q={p}: c={k.global_level:+.4f}  H_rate={entropy_rate(k):.6f}  H_marg={marginal_entropy(k):.6f}")

# %% [markdown]
# The loss only depends on the signal D = e^2 (1 + 2 w|w|) once the bias is
# chosen optimally. On the line e = 0 the model ignores its input and the
# loss is the marginal entropy; on the curve D = c it reaches the entropy
# rate. For p = q = 0.9 the level c is negative, so that curve lives where
# 1 + 2w|w| < 0, i.e. below w = -1/sqrt(2).

# %%
k = SwitchKernel(0.9, 0.9)
for w in (-1.2, 0.0, 0.8):
    print(f"L(0, {w:+.1f}) = {loss(k, (0.0, w)):.6f}")
for w in (-0.9, -1.3, -2.0):
    e, w = global_min_point(k, w)
    print(f"L({e:+.4f}, {w:+.2f}) = {loss(k, (e, w)):.6f}   b* = {optimal_bias(k, (e, w)):+.4f}")

# %% [markdown]
# The axis splits into local minima and local maxima at w = -1/sqrt(2), where
# a saddle sits. Which half is which flips with the sign of p + q - 1.

# %%
for p in (0.9, 0.1):
    kp = SwitchKernel(p, p)
    labels = [str(classify_critical(kp, (0.0, w))) for w in (-1.2, -INV_SQRT2, 0.4)]
    print(f"p=q={p}: w=-1.2 -> {labels[0]}, w=-1/sqrt2 -> {labels[1]}, w=0.4 -> {labels[2]}")

# %% [markdown]
# Along gradient flow e^2 - (w^2 + sign(w) log|w|) stays constant. The saddle
# sits on the level below.

# %%
print(f"saddle energy = {energy((0.0, -INV_SQRT2)):.10f}  vs  -(1+log 2)/2 = {-(1 + math.log(2)) / 2:.10f}")

# %%
# the gradient is a multiple of (1 + 2w|w|, 2 e |w|) times e
e, w = 0.7, -0.4
ge, gw = grad(k, (e, w))
print(f"grad L({e}, {w}) = ({ge:+.6f}, {gw:+.6f}); ratio check {gw * (1 + 2 * w * abs(w)) - ge * 2 * e * abs(w):+.1e}")

# %% [markdown]
# A coarse text map of the loss on [-2, 2]^2 for p = q = 0.9, denser glyphs
# meaning lower loss. Shading is by rank, so each glyph covers a tenth of the
# cells.

# %%
shades = " .:-=+*#%@"
es = np.linspace(-2, 2, 41)
ws = np.linspace(2, -2, 17)
E, W = np.meshgrid(es, ws)
L = np.asarray(loss(k, (E, W)))
ranks = (-L).ravel().argsort().argsort().reshape(L.shape)
idx = ranks * len(shades) // L.size
for row, w in zip(idx, ws):
    print(f"{w:+.1f} " + "".join(shades[i] for i in row))
