# %% [markdown]
# # Splitting audio into 8 subbands and putting it back together
#
# Design the prototype lowpass, modulate it into a bank, and check how close
# analysis followed by synthesis comes to the input.

# %%
import numpy as np

from mbcodec import pqmf
from mbcodec.spectral import si_sdr

bank = pqmf.default_bank(8, 481)
proto = bank.prototype
print(f"cutoff {proto.cutoff:.5f} cycles/sample, kaiser beta {proto.beta:.2f}")
print(f"impulse roundtrip error {pqmf.impulse_roundtrip_error_db(bank):.1f} dB")
print(f"secondary tap ratio of h * reverse(h): {pqmf.nyquist_tap_ratio(proto):.2e}")

# %% [markdown]
# White noise through the bank. The first and last filter lengths are
# transients, so they are left out of the score.

# %%
rng = np.random.default_rng(0)
x = rng.standard_normal(24000)
y = pqmf.reconstruct(bank, pqmf.analyze(bank, x))
core = slice(481, -481)
print(f"noise SI-SDR {si_sdr(x[core], y[core]):.1f} dB")

# %% [markdown]
# A sine at the centre of band 3 should land almost entirely in channel 3.

# %%
f = 3.5 / 16
tone = np.sin(2 * np.pi * f * np.arange(48000))
bands = pqmf.analyze(bank, tone).bands[:, 200:-200]
share = np.sum(bands**2, axis=1) / np.sum(bands**2)
for k, s in enumerate(share):
    print(f"band {k}: {100 * s:6.2f}% {'#' * int(50 * s)}")

# %%
bank16 = pqmf.default_bank(16, 481)
print(f"16 bands: impulse error {pqmf.impulse_roundtrip_error_db(bank16):.1f} dB")
