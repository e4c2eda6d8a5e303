"""Slicing complex captures into the token matrices the classifier consumes.

A sequence of M slices, each S complex samples, becomes an (M, 2S) real
matrix: every row is one slice with I and Q interleaved. No samples are
dropped, duplicated, or reordered, so detokenize is an exact inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, InvalidSpec, ShapeError
from .signals import ComplexSignal


@dataclass(frozen=True)
class TokenizationConfig:
    """num_slices (M) rows of slice_len (S) complex samples each; stride is
    the hop between consecutive sequences, defaulting to one full sequence."""

    num_slices: int
    slice_len: int
    stride: int | None = None

    def __post_init__(self):
        if self.num_slices < 1 or self.slice_len < 1:
            raise InvalidSpec(
                f"num_slices and slice_len must be >= 1, got {self.num_slices}x{self.slice_len}"
            )
        if self.stride is not None and self.stride < 1:
            raise InvalidSpec(f"stride must be >= 1, got {self.stride}")

    @property
    def samples_per_sequence(self) -> int:
        return self.num_slices * self.slice_len

    @property
    def token_width(self) -> int:
        return 2 * self.slice_len

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride is not None else self.samples_per_sequence


def small_config() -> TokenizationConfig:
    return TokenizationConfig(num_slices=24, slice_len=64)


def large_config() -> TokenizationConfig:
    return TokenizationConfig(num_slices=64, slice_len=128)


def tokenize(signal: ComplexSignal | np.ndarray, config: TokenizationConfig) -> np.ndarray:
    """First M*S samples -> (M, 2S) float64 with interleaved I/Q rows."""
    samples = signal.samples if isinstance(signal, ComplexSignal) else np.asarray(samples_1d(signal))
    need = config.samples_per_sequence
    if samples.size < need:
        raise InsufficientSamples(f"need {need} samples, signal has {samples.size}")
    block = samples[:need].reshape(config.num_slices, config.slice_len)
    tokens = np.empty((config.num_slices, config.token_width), dtype=np.float64)
    tokens[:, 0::2] = block.real
    tokens[:, 1::2] = block.imag
    return tokens


def detokenize(tokens: np.ndarray) -> np.ndarray:
    """Exact inverse of tokenize; returns the flat complex sample vector."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[1] % 2 != 0:
        raise ShapeError(f"token matrix must be (M, 2S), got {tokens.shape}")
    return (tokens[:, 0::2] + 1j * tokens[:, 1::2]).reshape(-1)


def samples_1d(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.complex128)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D complex array, got shape {arr.shape}")
    return arr


def index_sequences(total_samples: int, config: TokenizationConfig) -> list[int]:
    """Start offsets of every complete sequence window in a capture."""
    need = config.samples_per_sequence
    if total_samples < need:
        return []
    return list(range(0, total_samples - need + 1, config.effective_stride))
