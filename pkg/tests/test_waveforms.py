import numpy as np
import pytest
import scipy.signal as ss

from iqproto.errors import InvalidLabel, InvalidSpec
from iqproto.signals import ComplexSignal, mean_power
from iqproto.waveforms import (
    DEFAULT_PPDUS,
    DEFAULT_TARGET_LEN,
    OVERLAP_PAIRS,
    PROTOCOL_ORDER,
    BurstSpec,
    OverlapSpec,
    Protocol,
    dsss_preamble,
    generate_burst,
    generate_overlapping_capture,
    overlap_presets,
    parse_protocol,
    preamble_region,
)

EXPECTED_LENGTHS = {
    Protocol.B80211: 18112,
    Protocol.G80211: 32960,
    Protocol.N80211: 31340,
    Protocol.AX80211: 31640,
}


@pytest.mark.parametrize("protocol", list(Protocol))
def test_default_burst_length_and_power(protocol):
    rng = np.random.default_rng(0)
    burst = generate_burst(BurstSpec(protocol), rng)
    expected = EXPECTED_LENGTHS.get(protocol, DEFAULT_TARGET_LEN[Protocol.NOISE])
    assert len(burst) == expected
    assert burst.sample_rate_hz == 20e6
    assert mean_power(burst) == pytest.approx(1.0, abs=1e-9)


def test_burst_determinism_and_variation():
    spec = BurstSpec(Protocol.N80211)
    a = generate_burst(spec, np.random.default_rng(42)).samples
    b = generate_burst(spec, np.random.default_rng(42)).samples
    c = generate_burst(spec, np.random.default_rng(43)).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)  # payload is random per seed


def test_burst_spec_validation():
    with pytest.raises(InvalidSpec):
        BurstSpec(Protocol.G80211, payload_bits=2)
    with pytest.raises(InvalidSpec):
        BurstSpec(Protocol.G80211, ppdus_per_burst=0)
    with pytest.raises(InvalidSpec):
        BurstSpec("802.11g")  # must be the enum
    with pytest.raises(InvalidSpec):
        # 8 PPDUs cannot fit in 1000 samples
        generate_burst(BurstSpec(Protocol.G80211, target_len_samples=1000), np.random.default_rng(0))


def test_natural_length_scales_with_payload():
    rng = np.random.default_rng(0)
    short = generate_burst(
        BurstSpec(Protocol.G80211, payload_bits=500, ppdus_per_burst=1, target_len_samples=None), rng
    )
    long = generate_burst(
        BurstSpec(Protocol.G80211, payload_bits=5000, ppdus_per_burst=1, target_len_samples=None), rng
    )
    assert len(long) > len(short)
    # one PPDU: legacy head 320 + signaling 80 + ceil(500/192) syms * 80
    assert len(short) == 320 + 80 + 3 * 80


def test_parse_protocol():
    assert parse_protocol("802.11ax") is Protocol.AX80211
    assert parse_protocol("AX80211") is Protocol.AX80211
    assert parse_protocol("noise") is Protocol.NOISE
    with pytest.raises(InvalidLabel):
        parse_protocol("802.11be")


def test_spectral_occupancy():
    # all families: >= 90% of FFT energy within +-10 MHz at 20 MHz rate, and
    # within each family's nominal occupied band
    rng = np.random.default_rng(5)
    nominal_half_bw = {
        Protocol.B80211: 5.6e6,
        Protocol.G80211: 8.7e6,
        Protocol.N80211: 9.2e6,
        Protocol.AX80211: 9.9e6,
    }
    for protocol, half_bw in nominal_half_bw.items():
        burst = generate_burst(BurstSpec(protocol), rng)
        spec = np.abs(np.fft.fft(burst.samples)) ** 2
        freqs = np.fft.fftfreq(len(burst), 1 / 20e6)
        assert spec[np.abs(freqs) <= 10e6].sum() / spec.sum() >= 0.90
        assert spec[np.abs(freqs) <= half_bw].sum() / spec.sum() >= 0.90


def _norm_xcorr_peak(haystack: np.ndarray, needle: np.ndarray) -> float:
    num = np.abs(ss.fftconvolve(haystack, np.conj(needle[::-1]), mode="valid"))
    energy = np.convolve(np.abs(haystack) ** 2, np.ones(needle.size), mode="valid")
    return float(np.max(num / np.sqrt(energy * np.sum(np.abs(needle) ** 2) + 1e-30)))


def test_preamble_regions_are_distinct():
    regions = {p: preamble_region(p).samples for p in PROTOCOL_ORDER}
    for p1 in PROTOCOL_ORDER:
        for p2 in PROTOCOL_ORDER:
            a, t = regions[p1], regions[p2]
            if a.size < t.size:
                a, t = t, a
            peak = _norm_xcorr_peak(a, t)
            if p1 is p2:
                assert peak == pytest.approx(1.0, abs=1e-6)
            else:
                assert peak < 0.95


def test_bursts_begin_with_their_preamble():
    rng = np.random.default_rng(9)
    for protocol in PROTOCOL_ORDER:
        burst = generate_burst(BurstSpec(protocol), rng)
        region = preamble_region(protocol).samples
        peak = _norm_xcorr_peak(burst.samples[: region.size + 64], region)
        assert peak > 0.99, protocol


def test_dsss_preamble_length():
    # 144 DBPSK symbols * 11 chips, resampled 20/11: 2880 samples at 20 MHz
    template = dsss_preamble()
    assert len(template) == 2880
    assert template.sample_rate_hz == 20e6


def test_overlap_spec_ratio_and_presets():
    presets = overlap_presets()
    assert presets["narrow-25"].overlap_ratio == pytest.approx(0.25)
    assert presets["narrow-50"].overlap_ratio == pytest.approx(0.50)
    assert presets["wide-25"].capture_len_samples == 309500
    assert presets["narrow-25"].capture_len_samples == 198080
    assert presets["wide-25"].rx_sample_rate_hz == 62.5e6
    assert len(OVERLAP_PAIRS) == 6
    with pytest.raises(InvalidSpec):
        OverlapSpec(
            incumbent=Protocol.G80211,
            interferer=Protocol.N80211,
            rx_sample_rate_hz=20e6,
            rx_center_freq_hz=2.442e9,
            tx1_center_freq_hz=2.442e9,
            tx2_center_freq_hz=2.542e9,  # outside the wideband working rate
            capture_len_samples=4096,
        )


def _small_overlap_spec(**kw) -> OverlapSpec:
    defaults = dict(
        incumbent=Protocol.G80211,
        interferer=Protocol.N80211,
        rx_sample_rate_hz=62.5e6,
        rx_center_freq_hz=2.45e9,
        tx1_center_freq_hz=2.442e9,
        tx2_center_freq_hz=2.452e9,
        capture_len_samples=20000,
    )
    defaults.update(kw)
    return OverlapSpec(**defaults)


def test_overlap_capture_length_power_and_labels():
    rng = np.random.default_rng(3)
    spec = _small_overlap_spec()
    cap = generate_overlapping_capture(spec, rng)
    assert len(cap) == spec.capture_len_samples
    assert cap.sample_rate_hz == 62.5e6
    assert mean_power(cap) == pytest.approx(1.0, abs=1e-9)
    assert spec.protocols == [Protocol.G80211, Protocol.N80211]
    assert _small_overlap_spec(interferer_gain=0.0).protocols == [Protocol.G80211]


def test_overlap_interferer_occupies_offset_band():
    # with a wideband receiver the two transmissions sit at distinct offsets
    rng = np.random.default_rng(4)
    cap = generate_overlapping_capture(_small_overlap_spec(tx2_center_freq_hz=2.462e9), rng)
    spec = np.abs(np.fft.fftshift(np.fft.fft(cap.samples))) ** 2
    freqs = np.fft.fftshift(np.fft.fftfreq(len(cap), 1 / 62.5e6))
    incumbent_band = spec[(freqs > -18e6) & (freqs < 2e6)].sum()
    interferer_band = spec[(freqs > 2e6) & (freqs < 22e6)].sum()
    outside = spec[(freqs < -25e6) | (freqs > 29e6)].sum()
    assert incumbent_band > 100 * outside
    assert interferer_band > 100 * outside
    assert incumbent_band == pytest.approx(interferer_band, rel=0.2)  # equal power mix


def test_overlap_incumbent_only_matches_manual_path():
    from iqproto.dsp import frequency_shift, rational_resample
    from iqproto.waveforms import _tiled_burst

    spec = _small_overlap_spec(interferer_gain=0.0)
    cap = generate_overlapping_capture(spec, np.random.default_rng(8))

    rng = np.random.default_rng(8)
    need = int(np.ceil(spec.capture_len_samples * 20e6 / spec.rx_sample_rate_hz)) + 4096
    base = ComplexSignal(_tiled_burst(Protocol.G80211, need, rng), 20e6)
    wide = rational_resample(base, 25, 8)
    wide = frequency_shift(wide, spec.tx1_center_freq_hz - spec.rx_center_freq_hz)
    manual = wide.samples / np.sqrt(mean_power(wide))
    manual = manual[: spec.capture_len_samples]
    manual = manual / np.sqrt(np.mean(np.abs(manual) ** 2))
    np.testing.assert_allclose(cap.samples, manual, rtol=1e-10, atol=1e-12)
