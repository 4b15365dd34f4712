import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbcodec import bitstream as bs
from mbcodec.errors import CodeOutOfRange, CorruptStream, DepthMismatch, NotAStream


def header(n=8, fr=25, frames=0, bits=11):
    return bs.StreamHeader(24000, fr, n, bits, frames, 8)


class TestAccounting:
    @pytest.mark.parametrize("n,fr,bps", [(8, 25, 2200), (8, 50, 4400), (16, 25, 4400), (16, 50, 8800)])
    def test_bitrates(self, n, fr, bps):
        assert bs.bitrate_bps(header(n, fr)) == bps

    def test_compression(self):
        assert bs.compression_ratio(header(8, 25)) == pytest.approx(174.5, abs=0.1)
        assert bs.compression_ratio(header(16, 50)) == pytest.approx(43.6, abs=0.05)
        for n, fr in [(8, 25), (16, 50)]:
            h = header(n, fr)
            assert bs.compression_ratio(h) * bs.bitrate_bps(h) == 384000

    def test_bits_for(self):
        assert bs.bits_for(2048) == 11 and bs.bits_for(2049) == 12 and bs.bits_for(256) == 8


class TestPacking:
    def test_empty_stream(self):
        data = bs.pack(header(), [])
        assert len(data) == bs.HEADER_SIZE == 19
        h, frames = bs.unpack(data)
        assert frames == [] and h == header()

    def test_one_frame_size(self):
        frame = bs.CodeFrame(5, tuple(range(7)))
        assert len(bs.pack(header(frames=1), [frame])) == 19 + 11

    def test_msb_first_layout(self):
        codes = np.array([[2047, 0, 0, 0, 0, 0, 0, 1]])
        payload = bs.pack_codes(header(frames=1), codes)[19:]
        bits = np.unpackbits(np.frombuffer(payload, np.uint8))
        assert bits[:11].all() and not bits[11:87].any() and bits[87] == 1

    def test_random_roundtrip(self, rng):
        codes = rng.integers(0, 2048, size=(100, 8))
        frames = bs.codes_to_frames(codes)
        h, back = bs.unpack(bs.pack(header(frames=100), frames))
        assert back == frames

    @settings(max_examples=100, deadline=None)
    @given(n=st.sampled_from([8, 16]), fr=st.sampled_from([25, 50]), frames=st.integers(0, 40),
           bits=st.integers(1, 16), seed=st.integers(0, 2**32 - 1))
    def test_property_roundtrip(self, n, fr, frames, bits, seed):
        codes = np.random.default_rng(seed).integers(0, 1 << bits, size=(frames, n))
        h = header(n, fr, frames, bits)
        data = bs.pack_codes(h, codes)
        assert len(data) == 19 + (frames * n * bits + 7) // 8
        h2, back = bs.unpack_codes(data)
        assert h2 == h
        np.testing.assert_array_equal(back, codes)

    def test_code_out_of_range(self):
        with pytest.raises(CodeOutOfRange):
            bs.pack_codes(header(frames=1), np.full((1, 8), 2048))
        with pytest.raises(CodeOutOfRange):
            bs.pack_codes(header(frames=1), np.full((1, 8), -1))

    def test_depth_mismatch(self):
        with pytest.raises(DepthMismatch):
            bs.pack(header(frames=1), [bs.CodeFrame(0, (1, 2))])
        with pytest.raises(DepthMismatch):
            bs.pack_codes(header(frames=2), np.zeros((1, 8), dtype=int))

    def test_bad_magic(self):
        data = bytearray(bs.pack(header(), []))
        data[0] ^= 0xFF
        with pytest.raises(NotAStream):
            bs.unpack(bytes(data))
        with pytest.raises(NotAStream):
            bs.unpack(b"RIFF")

    def test_truncated(self, rng):
        data = bs.pack_codes(header(frames=3), rng.integers(0, 2048, size=(3, 8)))
        with pytest.raises(CorruptStream):
            bs.unpack(data[:-1])
        with pytest.raises(CorruptStream):
            bs.unpack(data[:10])

    def test_packed_stream(self, rng):
        stream = bs.PackedStream(header(frames=4), rng.integers(0, 2048, size=(4, 8)))
        assert bs.PackedStream.from_bytes(stream.to_bytes()) == stream
        assert stream.frames[0].depth == 7
