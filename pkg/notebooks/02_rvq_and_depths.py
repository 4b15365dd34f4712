# %% [markdown]
# # Residual quantization and how many layers to use
#
# Train a small residual stack on random vectors, look at how much energy
# each layer removes, then compare the depth distributions used to pick
# the number of active layers during training.

# %%
import numpy as np

from mbcodec import depth_sampler as ds
from mbcodec import quantizer as q

rng = np.random.default_rng(1)
corpus = rng.standard_normal((4000, 8)) * np.linspace(2.0, 0.25, 8)
stack = q.train_codebooks(corpus, size=64, num_layers=6, epochs=8, seed=1)
for k, st in enumerate(stack.stats, 1):
    print(f"layer {k}: residual energy {st.residual_energy_in:7.3f} -> {st.residual_energy_out:7.3f}, "
          f"reseeded {st.reseeded}")

# %%
v = corpus[0]
res = q.rvq_encode(stack, v)
print("codes", res.codes)
print("norms", np.round(res.residual_norms, 3))
for d in range(1, 7):
    err = np.linalg.norm(v - q.rvq_decode(stack, res.codes[:d]))
    print(f"first {d} layers: error {err:.3f}")

# %% [markdown]
# Depth distributions over 16 layers. Exponential and half-Gaussian decay
# from the first layer; chi-squared peaks at depth 2.

# %%
dists = [ds.DepthDistribution.uniform(), ds.DepthDistribution.exponential(0.6),
         ds.DepthDistribution.half_gaussian(5.0), ds.DepthDistribution.chi_squared(4.0)]
print("depth " + " ".join(f"{str(d):>16}" for d in dists))
table = np.array([ds.pmf(d, 16) for d in dists])
for k in range(16):
    print(f"{k + 1:5d} " + " ".join(f"{p:16.4f}" for p in table[:, k]))

# %%
sched = ds.DropoutSchedule.for_steps(100, ds.DepthDistribution.chi_squared(4.0))
draws = [ds.schedule_depth(sched, step, 16, rng) for step in range(100)]
for stage in (1, 2, 3):
    picked = [d for step, d in enumerate(draws) if sched.stage(step) == stage]
    print(f"stage {stage}: {len(picked)} steps, depths {min(picked)}..{max(picked)}, mean {np.mean(picked):.1f}")
