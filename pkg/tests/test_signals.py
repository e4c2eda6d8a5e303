import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iqproto.errors import DegenerateSignal, InvalidSpec, ShapeError
from iqproto.signals import (
    ComplexSignal,
    add_awgn,
    deinterleave_iq,
    interleave_iq,
    mean_power,
    normalize_interleaved,
    power_normalize,
)


def test_signal_rejects_empty_and_nonfinite():
    with pytest.raises(DegenerateSignal):
        ComplexSignal(np.array([], dtype=complex), 20e6)
    with pytest.raises(DegenerateSignal):
        ComplexSignal(np.array([1.0, np.nan * 1j]), 20e6)
    with pytest.raises(InvalidSpec):
        ComplexSignal(np.ones(4, dtype=complex), -1.0)


def test_interleave_layout_and_roundtrip():
    sig = ComplexSignal(np.array([1 + 2j, 3 - 4j]), 20e6)
    v = interleave_iq(sig)
    assert v.tolist() == [1.0, 2.0, 3.0, -4.0]
    assert np.array_equal(deinterleave_iq(v), sig.samples)
    with pytest.raises(ShapeError):
        deinterleave_iq(np.ones(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_interleave_roundtrip_property(n, seed):
    rng = np.random.default_rng(seed)
    samples = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    sig = ComplexSignal(samples, 20e6)
    assert np.array_equal(deinterleave_iq(interleave_iq(sig)), samples)


def test_mean_power_oracle():
    # |3|^2 = 9, |4j|^2 = 16 -> mean 12.5
    sig = ComplexSignal(np.array([3.0 + 0j, 4j]), 20e6)
    assert mean_power(sig) == pytest.approx(12.5)


def test_power_normalize_rms_oracle():
    sig = ComplexSignal(np.array([3.0 + 0j, 4j]), 20e6)
    out = power_normalize(sig)
    assert mean_power(out) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(out.samples, sig.samples / np.sqrt(12.5))


def test_power_normalize_as_printed_oracle():
    # divides by sqrt(mean |s|) = sqrt((3+4)/2); unit power NOT guaranteed
    sig = ComplexSignal(np.array([3.0 + 0j, 4j]), 20e6)
    out = power_normalize(sig, mode="as-printed")
    np.testing.assert_allclose(out.samples, sig.samples / np.sqrt(3.5))
    assert mean_power(out) != pytest.approx(1.0)


def test_power_normalize_scale_invariance():
    rng = np.random.default_rng(7)
    samples = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    a = power_normalize(ComplexSignal(samples, 20e6)).samples
    b = power_normalize(ComplexSignal(samples * 123.4, 20e6)).samples
    np.testing.assert_allclose(a, b, rtol=1e-12)
    # the printed variant is not scale invariant, which is why it is not default
    c = power_normalize(ComplexSignal(samples, 20e6), mode="as-printed").samples
    d = power_normalize(ComplexSignal(samples * 123.4, 20e6), mode="as-printed").samples
    assert not np.allclose(c, d)


def test_power_normalize_bad_mode_and_zero_signal():
    sig = ComplexSignal(np.ones(4, dtype=complex), 20e6)
    with pytest.raises(InvalidSpec):
        power_normalize(sig, mode="l2")
    with pytest.raises(DegenerateSignal):
        power_normalize(ComplexSignal(np.zeros(4, dtype=complex) + 0j, 20e6))


def test_normalize_interleaved_matches_complex_path():
    rng = np.random.default_rng(3)
    samples = 5.0 * (rng.standard_normal(128) + 1j * rng.standard_normal(128))
    sig = ComplexSignal(samples, 20e6)
    via_complex = interleave_iq(power_normalize(sig))
    via_real = normalize_interleaved(interleave_iq(sig))
    np.testing.assert_allclose(via_real, via_complex, rtol=1e-12)


def test_awgn_hits_requested_snr():
    rng = np.random.default_rng(11)
    sig = ComplexSignal(np.exp(2j * np.pi * 0.05 * np.arange(100_000)), 20e6)
    for snr_db in (-10.0, 0.0, 17.0):
        noisy = add_awgn(sig, snr_db, rng)
        noise = noisy.samples - sig.samples
        measured = 10 * np.log10(mean_power(sig) / np.mean(np.abs(noise) ** 2))
        assert measured == pytest.approx(snr_db, abs=0.2)


def test_awgn_none_is_identity_and_validates():
    rng = np.random.default_rng(0)
    sig = ComplexSignal(np.ones(16, dtype=complex), 20e6)
    assert add_awgn(sig, None, rng) is sig
    assert add_awgn(sig, np.inf, rng) is sig
    with pytest.raises(InvalidSpec):
        add_awgn(sig, -np.inf, rng)
    with pytest.raises(DegenerateSignal):
        add_awgn(ComplexSignal(np.zeros(8) + 0j, 20e6), 10.0, rng)


def test_awgn_snr_definition_additivity():
    # noise power scales inversely with linear SNR: +10 dB -> 10x less power
    rng = np.random.default_rng(5)
    sig = ComplexSignal(np.exp(2j * np.pi * 0.1 * np.arange(50_000)), 20e6)
    p0 = np.mean(np.abs(add_awgn(sig, 0.0, rng).samples - sig.samples) ** 2)
    p10 = np.mean(np.abs(add_awgn(sig, 10.0, rng).samples - sig.samples) ** 2)
    assert p0 / p10 == pytest.approx(10.0, rel=0.05)
