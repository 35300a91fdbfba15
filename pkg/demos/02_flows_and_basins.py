"""Gradient-flow trajectories, energy conservation and basin maps.

Run with ``python3 demos/02_flows_and_basins.py``.
"""

# %%
import numpy as np

from markovgf import SwitchKernel, entropy_rate, marginal_entropy
from markovgf.canonical import basin, predicted_limit, saddle_contour
from markovgf.flow import Mode, basin_sweep, integrate2d, integrate3d, integrate_batch, lattice, verify_trajectory

# %% [markdown]
# Start from (1.5, -0.3) under both kernels. The end point differs, but in
# both cases the flow lands on the entropy-rate loss, and the conserved
# energy pins down where.

# %%
for p in (0.9, 0.1):
    k = SwitchKernel(p, p)
    traj = integrate2d(k, (1.5, -0.3))
    rep = verify_trajectory(traj)
    pred = predicted_limit(k, (1.5, -0.3))
    print(
        f"p=q={p}: {len(traj)} samples, {rep.terminated_by}, {rep.critical_class}, "
        f"loss {rep.loss_final:.8f} (H_rate {entropy_rate(k):.8f}), "
        f"limit ({rep.theta_lim.e:+.6f}, {rep.theta_lim.w:+.6f}) vs predicted ({pred.e:+.6f}, {pred.w:+.6f}), "
        f"energy drift {rep.energy_drift:.1e}"
    )

# %% [markdown]
# Small initializations behave differently: with p + q > 1 the flow stalls on
# the axis at the marginal entropy, with p + q < 1 it reaches the entropy
# rate. The same holds with the attention scalar switched on.

# %%
rng = np.random.default_rng(0)
for p in (0.9, 0.1):
    k = SwitchKernel(p, p)
    for mode in (Mode.CANONICAL2D, Mode.ATTENTION3D):
        batch = integrate_batch(k, rng.normal(0, 0.01, (50, mode.dim)), mode)
        print(
            f"p=q={p} {mode}: mean final loss {batch.losses.mean():.6f} "
            f"(H_marg {marginal_entropy(k):.6f}, H_rate {entropy_rate(k):.6f})"
        )

# %%
traj = integrate3d(SwitchKernel(0.1, 0.1), (0.01, 0.01, 0.01))
print("3D final point", tuple(round(v, 5) for v in traj.final), "loss", round(float(traj.losses[-1]), 6))

# %% [markdown]
# The saddle contour |e| = g(w) separates the two basins. Points on it flow
# into the saddle, slowly.

# %%
k = SwitchKernel(0.9, 0.9)
w0 = -0.5
start = (saddle_contour(w0), w0)
rep = verify_trajectory(integrate2d(k, start))
print(f"start {start}: predicted {basin(k, start)}, integrated {rep.critical_class}, "
      f"{rep.terminated_by}, suspect={rep.saddle_suspect}")

# %% [markdown]
# Basin maps on a 25 x 25 grid: G = global minimum, m = local minimum on the
# axis, M = local maximum, S = saddle. Disagreements with the prediction
# would show as '?'.

# %%
symbol = {"GlobalMin": "G", "LocalMin": "m", "LocalMax": "M", "Saddle": "S", "NotCritical": "."}
n = 25
for p in (0.9, 0.1):
    grid = lattice([(-2, 2), (-2, 2)], (n, n))
    sweep = basin_sweep(SwitchKernel(p, p), grid)
    cells = {r.init: (symbol[str(r.integrated)] if r.agree else "?") for r in sweep.rows}
    # lattice order has e varying slowest; excluded points stay blank
    chars = np.array([cells.get(tuple(map(float, g)), " ") for g in grid]).reshape(n, n)
    print(f"\np=q={p}: agreement {sweep.agreement_rate:.3f}, excluded {sweep.n_excluded}   (rows: w from +2 to -2)")
    for j in range(n - 1, -1, -1):
        print("".join(chars[:, j]))
