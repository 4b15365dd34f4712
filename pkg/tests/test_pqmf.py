import math

import numpy as np
import pytest

from mbcodec import pqmf
from mbcodec.errors import BandMismatch, EmptyInput, InsufficientTaps, InvalidBandCount
from mbcodec.spectral import si_sdr

from conftest import direct_roundtrip


def energy_db(residual, reference):
    return 10 * math.log10(np.sum(residual**2) / np.sum(reference**2))


class TestPrototype:
    def test_linear_phase(self, bank8, bank16):
        for bank in (bank8, bank16):
            h = np.asarray(bank.prototype.taps)
            assert np.max(np.abs(h - h[::-1])) <= 1e-12

    def test_finite(self, bank8):
        assert np.all(np.isfinite(bank8.prototype.taps))

    @pytest.mark.parametrize("fixture", ["bank8", "bank16"])
    def test_product_filter_is_2m_band(self, fixture, request):
        proto = request.getfixturevalue(fixture).prototype
        M, L = proto.num_bands, proto.num_taps
        h = np.asarray(proto.taps)
        F = np.convolve(h, h[::-1])
        kept = np.abs(F[(L - 1) % (2 * M) :: 2 * M])
        dominant = kept > 1e-3 * np.max(np.abs(F))
        assert dominant.sum() == 1
        assert pqmf.nyquist_tap_ratio(proto) < 1e-3

    def test_cutoff_inside_search_interval(self, bank8):
        base = 1 / 32
        assert 0.5 * base <= bank8.prototype.cutoff <= 1.5 * base

    def test_invalid_band_count(self):
        with pytest.raises(InvalidBandCount):
            pqmf.design_prototype(1, 481)

    def test_too_few_taps(self):
        with pytest.raises(InsufficientTaps):
            pqmf.design_prototype(8, 63)

    def test_tiny_two_band_design_meets_threshold_or_refuses(self):
        try:
            proto = pqmf.design_prototype(2, 16, 60.0)
        except InsufficientTaps:
            return
        assert pqmf.impulse_roundtrip_error_db(pqmf.build_bank(proto)) <= -40.0


class TestModulation:
    def test_phase_terms(self):
        assert pqmf.phase_term(0) == pytest.approx(math.pi / 4)
        assert pqmf.phase_term(1) == pytest.approx(-math.pi / 4)

    @pytest.mark.parametrize("fixture", ["bank8", "bank16"])
    def test_closed_form(self, fixture, request):
        bank = request.getfixturevalue(fixture)
        M, L = bank.num_bands, bank.num_taps
        h = np.asarray(bank.prototype.taps)
        n = np.arange(L)
        assert bank.analysis_filters.shape == (M, L)
        assert bank.synthesis_filters.shape == (M, L)
        for k in range(M):
            expected = 2 * h * np.cos(np.pi / M * (k + 0.5) * n + (-1) ** k * np.pi / 4)
            assert np.max(np.abs(bank.analysis_filters[k] - expected)) <= 1e-12

    def test_first_tap_of_band_zero(self, bank8):
        h0 = bank8.prototype.taps[0]
        assert bank8.analysis_filters[0, 0] == pytest.approx(math.sqrt(2) * h0, rel=1e-12)

    def test_synthesis_is_scaled_time_reverse(self, bank8):
        np.testing.assert_array_equal(bank8.synthesis_filters, bank8.analysis_filters[:, ::-1] * 8)

    def test_group_delay(self, bank8):
        assert bank8.group_delay == 480


class TestAnalysisSynthesis:
    @pytest.mark.parametrize("fixture", ["bank8", "bank16"])
    def test_impulse_roundtrip_matches_direct_oracle(self, fixture, request):
        bank = request.getfixturevalue(fixture)
        M, L = bank.num_bands, bank.num_taps
        worst = -np.inf
        for offset in range(M):
            x = np.zeros(2 * L + M)
            x[L + offset] = 1.0
            y = direct_roundtrip(bank, x)
            np.testing.assert_allclose(pqmf.reconstruct(bank, pqmf.analyze(bank, x)), y, atol=1e-12)
            worst = max(worst, energy_db(y - x, x))
        assert worst <= -50.0

    @pytest.mark.parametrize("fixture", ["bank8", "bank16"])
    def test_white_noise_roundtrip(self, fixture, request, rng):
        bank = request.getfixturevalue(fixture)
        x = rng.standard_normal(24000)
        y = pqmf.reconstruct(bank, pqmf.analyze(bank, x))
        core = slice(bank.num_taps, -bank.num_taps)
        assert si_sdr(x[core], y[core]) >= 50.0
        assert pqmf.roundtrip_error_db(bank, x, margin=bank.num_taps) <= -50.0

    def test_zero_signal(self, bank8):
        sub = pqmf.analyze(bank8, np.zeros(960))
        assert sub.bands.shape[0] == 8
        assert not sub.bands.any()
        assert not pqmf.synthesize(bank8, sub).any()

    def test_band_lengths(self, bank8):
        sub = pqmf.analyze(bank8, np.ones(1001))
        assert sub.bands.shape[1] >= math.ceil(1001 / 8)
        assert sub.source_length == 1001
        out = pqmf.synthesize(bank8, sub)
        assert out.size == 8 * sub.bands.shape[1] + 481 - 1

    def test_sine_isolated_in_its_band(self, bank8):
        M, k = 8, 3
        f = (k + 0.5) / (2 * M)
        x = np.sin(2 * np.pi * f * np.arange(48000))
        bands = pqmf.analyze(bank8, x).bands[:, 200:-200]
        energy = np.sum(bands**2, axis=1)
        assert energy[k] / energy.sum() >= 0.95

    def test_band_zero_impulse_stays_lowpass(self, bank8):
        M = 8
        bands = np.zeros((M, 256))
        bands[0, 128] = 1.0
        y = pqmf.synthesize(bank8, bands)
        spec = np.abs(np.fft.rfft(y, 8192)) ** 2
        freqs = np.fft.rfftfreq(8192)
        inside = spec[freqs <= 1 / (2 * M)].sum()
        assert inside / spec.sum() >= 0.90

    def test_linearity(self, bank8, rng):
        x, y = rng.standard_normal(3000), rng.standard_normal(3000)
        a, b = 0.7, -2.3
        lhs = pqmf.analyze(bank8, a * x + b * y).bands
        rhs = a * pqmf.analyze(bank8, x).bands + b * pqmf.analyze(bank8, y).bands
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))

    def test_empty_input(self, bank8):
        with pytest.raises(EmptyInput):
            pqmf.analyze(bank8, np.zeros(0))

    def test_band_mismatch(self, bank8):
        with pytest.raises(BandMismatch):
            pqmf.synthesize(bank8, np.zeros((4, 10)))


def test_filter_file_roundtrip(bank8, tmp_path):
    path = tmp_path / "proto.txt"
    pqmf.save_filter(bank8.prototype, path)
    assert path.read_text().splitlines()[0] == "M=8 L=481"
    loaded = pqmf.load_filter(path)
    np.testing.assert_array_equal(np.asarray(loaded.taps), np.asarray(bank8.prototype.taps))
    assert loaded.num_bands == 8
