"""Burst synthesis, raw-IQ protocol classification, and streaming inference.

The toolkit covers the full loop: synthesize WiFi-family bursts at complex
baseband, impair them with fading and noise, slice them into token matrices,
classify with a from-scratch transformer encoder, benchmark against a
correlation-based preamble detector, and serve the classifier inside a
three-stage concurrent receive pipeline.
"""

from .channel import ChannelModel, FadingRealization, apply_fading, draw_realization
from .evaluation import (
    ConfusionMatrix,
    MultiLabelMetrics,
    SweepResult,
    grid_search,
    multilabel_evaluate,
    report,
    snr_sweep,
)
from .legacy import DetectionResult, LegacyThresholds, detect, detection_table
from .pipeline import (
    BufferChunk,
    FileSource,
    PredictionRecord,
    QueueConfig,
    StageTimings,
    SyntheticSource,
    run_pipeline,
)
from .signals import ComplexSignal, add_awgn, interleave_iq, mean_power, power_normalize
from .tokenizer import TokenizationConfig, tokenize, detokenize
from .waveforms import BurstSpec, OverlapSpec, Protocol, generate_burst, generate_overlapping_capture

__all__ = [
    "BufferChunk",
    "BurstSpec",
    "ChannelModel",
    "ComplexSignal",
    "ConfusionMatrix",
    "DetectionResult",
    "FadingRealization",
    "FileSource",
    "LegacyThresholds",
    "MultiLabelMetrics",
    "OverlapSpec",
    "PredictionRecord",
    "Protocol",
    "QueueConfig",
    "StageTimings",
    "SweepResult",
    "SyntheticSource",
    "TokenizationConfig",
    "add_awgn",
    "apply_fading",
    "detect",
    "detection_table",
    "detokenize",
    "draw_realization",
    "generate_burst",
    "generate_overlapping_capture",
    "grid_search",
    "interleave_iq",
    "mean_power",
    "multilabel_evaluate",
    "power_normalize",
    "report",
    "run_pipeline",
    "snr_sweep",
    "tokenize",
]

__version__ = "0.1.0"
