# %% [markdown]
# # A small codec end to end
#
# Train on two minutes of synthetic tones and noise, then encode a held-out
# clip at several depths. 256-entry codebooks keep training to under a
# minute. Takes roughly 30 s.

# %%
import time

import numpy as np

from mbcodec import pipeline, synth
from mbcodec.spectral import si_sdr

config = pipeline.CodecConfig(frame_rate=50, total_codebooks=16, codebook_size=256)
regions = config.retained_regions()
print("kept frequency regions (Hz):", [(round(a), round(b)) for a, b in regions])
corpus = synth.synthetic_corpus(12, 10.0, 24000, regions, seed=0)

t0 = time.perf_counter()
model = pipeline.train(config, corpus, pipeline.TrainingConfig(seed=0))
print(f"trained in {time.perf_counter() - t0:.1f} s")

# %%
for r in model.training_log:
    if r["kind"] == "layer":
        print(f"layer {r['layer']:2d} (band {r['band']}): energy {r['residual_energy_in']:.4f} "
              f"-> {r['residual_energy_out']:.4f}")

# %%
x = synth.synthetic_corpus(1, 10.0, 24000, regions, seed=99)[0]
lat = pipeline.extract_latents(model, x)
y = pipeline.synthesize_latents(model, lat.z)
edge = slice(2000, y.size - 2000)
print(f"no quantization: {si_sdr(x[edge], y[edge]):5.1f} dB")
for depth in (1, 2, 4, 8, 15):
    stream = pipeline.encode(model, x, depth=depth)
    y = pipeline.decode(model, stream.to_bytes())
    print(f"depth {depth:2d}: {si_sdr(x[edge], y[edge]):5.1f} dB")

# %% [markdown]
# Each acoustic layer was trained on one subband. Its output should look
# most like that subband's spectrum.

# %%
pairing = pipeline.cross_pairing(model, x)
matched, mismatched = pipeline.matched_vs_mismatched(config, pairing)
print(np.round(pairing[:8], 2))
print(f"own band {matched:.3f}, other bands {mismatched:.3f}")
