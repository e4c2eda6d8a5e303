"""Tapped-delay-line fading channels used for training augmentation and sweeps.

Tap profiles are fixed; each realization draws independent complex Gaussian
gains. apply_fading convolves at the signal's own sample rate, rounding tap
delays to whole samples, and preserves length.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSpec
from .signals import ComplexSignal


class ChannelModel(enum.Enum):
    NONE = "none"
    RAYLEIGH = "rayleigh"
    TGN_B = "tgn-b"
    TGAX_B = "tgax-b"


# single-tap flat fade, average power -3 dB
_RAYLEIGH_DELAYS_S = np.array([1.5e-9])
_RAYLEIGH_POWERS_LIN = np.array([10.0 ** (-3.0 / 10.0)])

# indoor model B profile: 9 taps at 10 ns spacing, normalized to unit total
_INDOOR_B_DELAYS_S = np.arange(9) * 10e-9
_INDOOR_B_POWERS_DB = np.array([-5.4, -2.4, -10.7, -11.5, -7.4, -7.1, -10.3, -12.7, -16.3])
_INDOOR_B_POWERS_LIN = 10.0 ** (_INDOOR_B_POWERS_DB / 10.0)
_INDOOR_B_POWERS_LIN = _INDOOR_B_POWERS_LIN / _INDOOR_B_POWERS_LIN.sum()


@dataclass(frozen=True)
class FadingRealization:
    """One draw of tap gains; reusable across signals for a coherent scene."""

    model: ChannelModel
    delays_s: np.ndarray
    gains: np.ndarray

    @property
    def max_delay_s(self) -> float:
        return float(self.delays_s.max()) if self.delays_s.size else 0.0


def draw_realization(model: ChannelModel, rng: np.random.Generator) -> FadingRealization:
    """Sample complex Gaussian tap gains for the profile's delay/power plan."""
    if model is ChannelModel.NONE:
        return FadingRealization(model, np.array([0.0]), np.array([1.0 + 0.0j]))
    if model is ChannelModel.RAYLEIGH:
        delays, powers = _RAYLEIGH_DELAYS_S, _RAYLEIGH_POWERS_LIN
    elif model in (ChannelModel.TGN_B, ChannelModel.TGAX_B):
        delays, powers = _INDOOR_B_DELAYS_S, _INDOOR_B_POWERS_LIN
    else:
        raise InvalidSpec(f"unknown channel model {model!r}")
    scale = np.sqrt(powers / 2.0)
    gains = scale * (rng.standard_normal(powers.size) + 1j * rng.standard_normal(powers.size))
    return FadingRealization(model, delays, gains)


def apply_fading(signal: ComplexSignal, realization: FadingRealization) -> ComplexSignal:
    """y[n] = sum_k h_k x[n - round(tau_k * fs)], same length as the input."""
    if realization.model is ChannelModel.NONE:
        return signal
    x = signal.samples
    y = np.zeros_like(x)
    for tau, h in zip(realization.delays_s, realization.gains):
        d = int(round(tau * signal.sample_rate_hz))
        if d == 0:
            y += h * x
        elif d < x.size:
            y[d:] += h * x[: x.size - d]
    return ComplexSignal(y, signal.sample_rate_hz)


DEFAULT_SNR_RANGE_DB = (-30.0, 30.0)
ALL_CHANNEL_MODELS = tuple(ChannelModel)


def sample_random_condition(
    rng: np.random.Generator,
    models: Sequence[ChannelModel] = ALL_CHANNEL_MODELS,
    snr_range_db: tuple[float, float] = DEFAULT_SNR_RANGE_DB,
) -> tuple[ChannelModel, float]:
    """Uniformly pick a channel model and an SNR for augmentation."""
    if not models:
        raise InvalidSpec("models must be non-empty")
    lo, hi = snr_range_db
    if lo > hi:
        raise InvalidSpec(f"snr range is inverted: {snr_range_db}")
    model = models[int(rng.integers(0, len(models)))]
    return model, float(rng.uniform(lo, hi))
