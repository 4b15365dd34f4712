# %% [markdown]
# # Bitrate bookkeeping
#
# Every frame carries one semantic code and N-1 acoustic codes, 11 bits each
# for 2048-entry codebooks.

# %%
import numpy as np

from mbcodec import bitstream as bs
from mbcodec.pipeline import CodecConfig

for n in (8, 16):
    for fr in (25, 50):
        h = CodecConfig(frame_rate=fr, total_codebooks=n).header(0)
        print(f"N={n:2d} FR={fr} Hz: {bs.bitrate_bps(h):5d} bps, compression {bs.compression_ratio(h):6.1f}x")

# %% [markdown]
# One second of random codes at 25 Hz, packed and unpacked.

# %%
header = CodecConfig().header(25)
codes = np.random.default_rng(0).integers(0, 2048, size=(25, 8))
data = bs.pack_codes(header, codes)
print(f"{len(data)} bytes = {bs.HEADER_SIZE} header + {header.payload_bytes} payload")
_, back = bs.unpack_codes(data)
print("roundtrip exact:", np.array_equal(back, codes))
