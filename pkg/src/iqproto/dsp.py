"""Rate conversion and spectral plumbing.

The resampler is the load-bearing piece: the streaming path depends on
12800 -> 8192 and 12900 -> 8256 coming out exactly for up/down = 16/25,
with the FIR group delay compensated so content stays time-aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import upfirdn

from .errors import DegenerateSignal, InvalidSpec
from .signals import ComplexSignal


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase FIR taps plus the metadata the resampler needs."""

    taps: np.ndarray
    cutoff: float  # cycles/sample at the design rate

    @property
    def num_taps(self) -> int:
        return self.taps.size

    @property
    def group_delay_samples(self) -> int:
        # odd-length symmetric FIR: exact integer delay
        return (self.taps.size - 1) // 2


def design_lowpass(cutoff: float, num_taps: int) -> FirFilter:
    """Hamming-windowed sinc lowpass with unit DC gain.

    cutoff is in cycles/sample, 0 < cutoff < 0.5. num_taps must be odd so the
    group delay is an integer.
    """
    if not 0.0 < cutoff < 0.5:
        raise InvalidSpec(f"cutoff must lie in (0, 0.5) cycles/sample, got {cutoff}")
    if num_taps < 3 or num_taps % 2 == 0:
        raise InvalidSpec(f"num_taps must be odd and >= 3, got {num_taps}")
    n = np.arange(num_taps) - (num_taps - 1) / 2.0
    taps = 2.0 * cutoff * np.sinc(2.0 * cutoff * n)
    taps *= np.hamming(num_taps)
    taps /= taps.sum()
    return FirFilter(taps=taps, cutoff=cutoff)


def resample_output_length(input_len: int, up: int, down: int) -> int:
    g = math.gcd(up, down)
    return (input_len * (up // g)) // (down // g)


def rational_resample(signal: ComplexSignal, up: int, down: int) -> ComplexSignal:
    """Polyphase rate conversion by up/down with group-delay compensation.

    The anti-alias/anti-image filter has 16*max(up, down)+1 taps (after the
    ratio is reduced) and cutoff min(1/(2 up), 1/(2 down)) at the upsampled
    rate. Output length is exactly floor(len * up / down); the leading
    group-delay transient is discarded so sample k of the output sits at input
    time k*down/up to within one upsampled-rate sample.
    """
    if up < 1 or down < 1:
        raise InvalidSpec(f"up and down must be >= 1, got {up}/{down}")
    g = math.gcd(up, down)
    up, down = up // g, down // g
    if up == 1 and down == 1:
        return signal
    x = signal.samples
    out_len = (x.size * up) // down
    if out_len == 0:
        raise DegenerateSignal(f"{x.size} samples resampled by {up}/{down} would be empty")

    num_taps = 16 * max(up, down) + 1
    cutoff = min(1.0 / (2.0 * up), 1.0 / (2.0 * down))
    fir = design_lowpass(cutoff, num_taps)
    # unit passband gain after zero-stuffing requires scaling by up
    taps = fir.taps * up

    y_full = upfirdn(taps, x, up=up, down=down)
    # group delay at the upsampled rate -> first clean output index
    skip = -(-fir.group_delay_samples // down)  # ceil division
    y = y_full[skip : skip + out_len]
    if y.size < out_len:  # upfirdn tail ran out; pad with trailing zeros
        y = np.concatenate([y, np.zeros(out_len - y.size, dtype=y.dtype)])
    return ComplexSignal(y, signal.sample_rate_hz * up / down)


def frequency_shift(signal: ComplexSignal, shift_hz: float) -> ComplexSignal:
    """Multiply by a complex exponential, moving content by shift_hz."""
    if not np.isfinite(shift_hz):
        raise InvalidSpec(f"shift_hz must be finite, got {shift_hz}")
    if abs(shift_hz) >= signal.sample_rate_hz / 2.0:
        raise InvalidSpec(
            f"|shift| {shift_hz} Hz exceeds Nyquist for rate {signal.sample_rate_hz} Hz"
        )
    if shift_hz == 0.0:
        return signal
    n = np.arange(signal.samples.size)
    rotator = np.exp(2j * np.pi * shift_hz / signal.sample_rate_hz * n)
    return ComplexSignal(signal.samples * rotator, signal.sample_rate_hz)
