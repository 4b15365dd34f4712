"""Multi-codebook audio codec toolkit: PQMF subbands, semantic VQ plus
subband-supervised residual VQ, dropout-depth sampling and a fixed-width
bitstream."""

from .bitstream import CodeFrame, PackedStream, StreamHeader, bitrate_bps, compression_ratio, pack, unpack
from .depth_sampler import DepthDistribution, DropoutSchedule, pmf, sample, schedule_depth
from .errors import CodecError
from .pipeline import CodecConfig, CodecModel, TrainingConfig, decode, encode, evaluate, extract_latents, train
from .pqmf import analyze, build_bank, design_prototype, synthesize

__version__ = "0.1.0"
