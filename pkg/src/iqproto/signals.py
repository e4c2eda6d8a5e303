"""Complex-baseband sample buffers and the operations everything else leans on.

A signal is an immutable pair (samples, sample_rate_hz). Samples are complex128
row vectors; interleaving to/from the real domain is explicit and lossless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignal, InvalidSpec, ShapeError

_POWER_MODES = ("rms", "as-printed")


@dataclass(frozen=True)
class ComplexSignal:
    """One contiguous complex-baseband capture at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise DegenerateSignal("signal must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples.view(np.float64))):
            raise DegenerateSignal("signal contains non-finite samples")
        if not np.isfinite(self.sample_rate_hz) or self.sample_rate_hz <= 0:
            raise InvalidSpec(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def interleave_iq(signal: ComplexSignal | np.ndarray) -> np.ndarray:
    """Flatten complex samples to [I0, Q0, I1, Q1, ...] float64.

    Inverse of deinterleave_iq; the pair is bit-exact both ways.
    """
    samples = signal.samples if isinstance(signal, ComplexSignal) else samples_arg_check(signal)
    out = np.empty(2 * samples.size, dtype=np.float64)
    out[0::2] = samples.real
    out[1::2] = samples.imag
    return out


def deinterleave_iq(values: np.ndarray) -> np.ndarray:
    """Rebuild complex samples from an interleaved real vector."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size % 2 != 0:
        raise ShapeError(f"interleaved vector must be 1-D with even length, got shape {values.shape}")
    return values[0::2] + 1j * values[1::2]


def samples_arg_check(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise DegenerateSignal("expected a non-empty 1-D complex array")
    return arr


def mean_power(signal: ComplexSignal | np.ndarray) -> float:
    """Average of |s[n]|^2 over the buffer."""
    samples = signal.samples if isinstance(signal, ComplexSignal) else samples_arg_check(signal)
    return float(np.mean(samples.real**2 + samples.imag**2))


def power_normalize(signal: ComplexSignal, mode: str = "rms") -> ComplexSignal:
    """Rescale to unit power.

    mode="rms" divides by sqrt(mean |s|^2) so the output has exactly unit mean
    power. mode="as-printed" divides by sqrt(mean |s|) instead, reproducing a
    published variant of the same normalizer; it is kept only for comparison
    and is not scale-invariant.
    """
    if mode not in _POWER_MODES:
        raise InvalidSpec(f"mode must be one of {_POWER_MODES}, got {mode!r}")
    if mode == "rms":
        denom = np.sqrt(mean_power(signal))
    else:
        denom = np.sqrt(np.mean(np.abs(signal.samples)))
    if denom == 0.0 or not np.isfinite(denom):
        raise DegenerateSignal("cannot normalize an all-zero signal")
    return ComplexSignal(signal.samples / denom, signal.sample_rate_hz)


def normalize_interleaved(values: np.ndarray) -> np.ndarray:
    """RMS power normalization applied directly to an interleaved real vector.

    Equivalent to deinterleave -> power_normalize -> interleave, without the
    round trip. Mean complex power of an interleaved vector v is 2*mean(v^2).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size % 2 != 0:
        raise ShapeError(f"interleaved vector must be 1-D with even length, got shape {values.shape}")
    denom = np.sqrt(2.0 * np.mean(values**2))
    if denom == 0.0 or not np.isfinite(denom):
        raise DegenerateSignal("cannot normalize an all-zero vector")
    return values / denom


def add_awgn(signal: ComplexSignal, snr_db: float | None, rng: np.random.Generator) -> ComplexSignal:
    """Add circularly-symmetric white Gaussian noise at the requested SNR.

    SNR is defined against the signal's own mean power, so the call is
    self-calibrating: measuring 10*log10(P_signal / P_noise) on the output
    recovers snr_db up to estimator variance. snr_db=None (or +inf) is the
    identity.
    """
    if snr_db is None or snr_db == np.inf:
        return signal
    if not np.isfinite(snr_db):
        raise InvalidSpec(f"snr_db must be finite or None, got {snr_db}")
    p_signal = mean_power(signal)
    if p_signal == 0.0:
        raise DegenerateSignal("cannot set an SNR against a zero-power signal")
    p_noise = p_signal / 10.0 ** (snr_db / 10.0)
    sigma = np.sqrt(p_noise / 2.0)  # per rail, so |n|^2 averages to p_noise
    n = signal.samples.size
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return ComplexSignal(signal.samples + noise, signal.sample_rate_hz)
