"""Three-stage concurrent streaming classifier.

receiver -> q1 -> signal processing -> q2 -> inference

The receiver pulls fixed-size sample buffers from a source (synthetic
generator or capture playback). Signal processing converts raw interleaved
shorts to [-1, 1] floats, resamples 16/25 down to the model rate, and trims
to the inference window. Inference power-normalizes, tokenizes, runs the
forward pass, and appends one line per prediction to a log.

Both queues are bounded and drop-newest: a producer that finds its queue
full discards the item it is holding and keeps running, so a slow stage
can never stall an upstream one. The only blocking puts are the shutdown
sentinels, which a live consumer always drains. Every chunk the receiver
emits is therefore predicted, counted against a queue, or (for a source's
trailing partial buffer) reported as in-flight: the books always balance.

The per-stage transforms are plain functions shared with
process_chunk_offline, so a streamed prediction is bit-identical to the
offline path on the same chunk.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .capture import read_capture
from .dsp import rational_resample
from .errors import ConfigError, InsufficientData, InvalidSpec
from .model.transformer import TransformerConfig, predict_log_scores
from .signals import ComplexSignal, add_awgn
from .tokenizer import TokenizationConfig, tokenize
from .waveforms import PROTOCOL_ORDER, BurstSpec, Protocol, generate_burst, parse_protocol

SOURCE_RATE_HZ = 31.25e6
CHUNK_COMPLEX_SAMPLES = 12_900
MODEL_RATE_UP = 16  # 31.25 MHz * 16/25 = 20 MHz
MODEL_RATE_DOWN = 25
INFERENCE_WINDOW = 8_192  # resampled chunk (8256) trimmed to the model window
_INT16_FULL_SCALE = 32768.0


@dataclass(frozen=True)
class BufferChunk:
    """One receiver buffer: interleaved int16, 12,900 complex samples."""

    sequence_number: int
    capture_timestamp_ns: int
    samples: np.ndarray  # shape (2 * CHUNK_COMPLEX_SAMPLES,), dtype int16

    def __post_init__(self):
        if self.samples.dtype != np.int16 or self.samples.shape != (2 * CHUNK_COMPLEX_SAMPLES,):
            raise InvalidSpec(
                f"chunk must be {2 * CHUNK_COMPLEX_SAMPLES} interleaved int16 values"
            )


@dataclass(frozen=True)
class QueueConfig:
    q1_capacity: int = 2
    q2_capacity: int = 2

    def __post_init__(self):
        if self.q1_capacity < 1 or self.q2_capacity < 1:
            raise ConfigError("queue capacities must be >= 1")


@dataclass(frozen=True)
class PredictionRecord:
    sequence_number: int
    label: str
    log_scores: tuple
    received_ns: int
    processed_ns: int
    predicted_ns: int

    def log_line(self) -> str:
        scores = ",".join(f"{s:.6f}" for s in self.log_scores)
        return f"{self.sequence_number},{self.predicted_ns},{self.label},{scores}"


@dataclass(frozen=True)
class StageTimings:
    stages: dict  # name -> {"mean_s", "max_s", "stddev_s", "count"}
    end_to_end_mean_s: float
    predictions_per_second: float
    drops: dict  # {"q1": int, "q2": int}


def profile(records: list[PredictionRecord], stage_durations: dict,
            drops: dict) -> StageTimings:
    """Aggregate stage statistics; needs at least 10 completed predictions."""
    if len(records) < 10:
        raise InsufficientData(
            f"profiling needs >= 10 predictions, got {len(records)}"
        )
    stages = {}
    for name, durs in stage_durations.items():
        arr = np.asarray(durs, dtype=np.float64)
        stages[name] = {
            "mean_s": float(arr.mean()),
            "max_s": float(arr.max()),
            "stddev_s": float(arr.std()),
            "count": int(arr.size),
        }
    latency = np.array([(r.predicted_ns - r.received_ns) for r in records], dtype=np.float64)
    span_ns = records[-1].predicted_ns - records[0].predicted_ns
    pps = (len(records) - 1) / (span_ns / 1e9) if span_ns > 0 else float("inf")
    return StageTimings(
        stages=stages,
        end_to_end_mean_s=float(latency.mean() / 1e9),
        predictions_per_second=float(pps),
        drops=dict(drops),
    )


# ---------------------------------------------------------------------------
# sources


def _to_int16_chunks(samples: np.ndarray, sample_rate_hz: float):
    """Resample to the receiver rate, quantize to half-scale int16, chop.

    Returns (list of interleaved int16 arrays, leftover partial count 0/1)."""
    sig = ComplexSignal(samples, sample_rate_hz)
    if sample_rate_hz != SOURCE_RATE_HZ:
        ratio = Fraction(int(round(SOURCE_RATE_HZ)), int(round(sample_rate_hz)))
        if max(ratio.numerator, ratio.denominator) > 1000:
            raise InvalidSpec(
                f"no practical rational conversion from {sample_rate_hz} Hz "
                f"to {SOURCE_RATE_HZ} Hz"
            )
        sig = rational_resample(sig, ratio.numerator, ratio.denominator)
    x = sig.samples
    peak = max(np.abs(x.real).max(), np.abs(x.imag).max(), 1e-30)
    scale = 0.5 * (_INT16_FULL_SCALE - 1.0) / peak
    interleaved = np.empty(2 * x.size, dtype=np.int16)
    interleaved[0::2] = np.round(x.real * scale).astype(np.int16)
    interleaved[1::2] = np.round(x.imag * scale).astype(np.int16)
    step = 2 * CHUNK_COMPLEX_SAMPLES
    full = interleaved.size // step
    chunks = [interleaved[i * step : (i + 1) * step] for i in range(full)]
    return chunks, int(interleaved.size % step != 0)


class _PacedSource:
    """Iteration plumbing shared by the concrete sources: deadline pacing,
    sequence numbering, and the partial-buffer tally."""

    def __init__(self, pacing_s: float, chunk_count: int | None):
        if pacing_s < 0:
            raise ConfigError("pacing_s must be >= 0")
        self.pacing_s = pacing_s
        self.chunk_count = chunk_count
        self.discarded_partials = 0

    def _raw_chunks(self):
        raise NotImplementedError

    def __iter__(self):
        start = time.monotonic()
        for seq, raw in enumerate(self._raw_chunks()):
            if self.chunk_count is not None and seq >= self.chunk_count:
                return
            if self.pacing_s > 0:
                deadline = start + seq * self.pacing_s
                now = time.monotonic()
                if deadline > now:
                    time.sleep(deadline - now)
            yield BufferChunk(seq, time.monotonic_ns(), raw)


class SyntheticSource(_PacedSource):
    """Endless stream of back-to-back bursts of one protocol, plus noise.

    pacing_s = 0 runs as fast as the consumer pulls; otherwise one chunk is
    released every pacing_s seconds (the simulated capture cadence)."""

    def __init__(
        self,
        protocol: Protocol | str = Protocol.B80211,
        rng: np.random.Generator | None = None,
        snr_db: float | None = None,
        pacing_s: float = 0.0,
        chunk_count: int | None = None,
        num_bursts_in_loop: int = 4,
    ):
        super().__init__(pacing_s, chunk_count)
        protocol = parse_protocol(protocol) if isinstance(protocol, str) else protocol
        rng = rng or np.random.default_rng(0)
        bursts = [
            generate_burst(BurstSpec(protocol), rng).samples
            for _ in range(num_bursts_in_loop)
        ]
        sig = ComplexSignal(np.concatenate(bursts), 20e6)
        sig = add_awgn(sig, snr_db, rng)
        # the loop buffer's ragged end is construction surplus, not stream
        # data, so it never enters the books
        self._chunks, _ = _to_int16_chunks(sig.samples, sig.sample_rate_hz)
        if not self._chunks:
            raise InsufficientData("loop buffer shorter than one chunk")

    def _raw_chunks(self):
        while True:
            yield from self._chunks


class FileSource(_PacedSource):
    """Plays capture files back as receiver buffers, optionally looping."""

    def __init__(self, paths, pacing_s: float = 0.0, loop: bool = False,
                 chunk_count: int | None = None):
        super().__init__(pacing_s, chunk_count)
        paths = [Path(p) for p in paths]
        if not paths:
            raise ConfigError("FileSource needs at least one capture path")
        self._chunks = []
        for path in paths:
            sig, _ = read_capture(path)
            chunks, partial = _to_int16_chunks(sig.samples, sig.sample_rate_hz)
            self._chunks.extend(chunks)
            self.discarded_partials += partial
        if not self._chunks:
            raise InsufficientData("capture files shorter than one chunk")
        self.loop = loop

    def _raw_chunks(self):
        while True:
            yield from self._chunks
            if not self.loop:
                return


# ---------------------------------------------------------------------------
# stage transforms (shared by the threads and the offline reference path)


def signal_processing_transform(raw: np.ndarray) -> np.ndarray:
    """Interleaved int16 -> [-1,1] floats -> 20 MHz complex model window."""
    floats = raw.astype(np.float64) / _INT16_FULL_SCALE
    sig = ComplexSignal(floats[0::2] + 1j * floats[1::2], SOURCE_RATE_HZ)
    resampled = rational_resample(sig, MODEL_RATE_UP, MODEL_RATE_DOWN)
    return resampled.samples[:INFERENCE_WINDOW]


def inference_tokens(window: np.ndarray, tok_config: TokenizationConfig) -> np.ndarray:
    """Per-window unit-power scaling then tokenization; zero windows pass
    through unscaled instead of dividing by zero."""
    window = window[: tok_config.samples_per_sequence]
    power = np.mean(window.real**2 + window.imag**2)
    if power > 0:
        window = window / np.sqrt(power)
    return tokenize(window, tok_config)


def process_chunk_offline(
    chunk: BufferChunk,
    params: dict,
    model_config: TransformerConfig,
    tok_config: TokenizationConfig,
    classes: list[str],
) -> tuple[str, tuple]:
    """The streaming pipeline's numeric path as one synchronous call."""
    window = signal_processing_transform(chunk.samples)
    tokens = inference_tokens(window, tok_config)
    scores = predict_log_scores(params, model_config, tokens)
    return classes[int(np.argmax(scores))], tuple(float(s) for s in scores)


# ---------------------------------------------------------------------------
# the pipeline proper


@dataclass
class PipelineResult:
    records: list[PredictionRecord]
    chunks_in: int
    drops_q1: int
    drops_q2: int
    in_flight: int
    stage_durations: dict = field(default_factory=dict)
    max_queue_depth: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    log_path: Path | None = None

    def profile(self) -> StageTimings:
        return profile(self.records, self.stage_durations,
                       {"q1": self.drops_q1, "q2": self.drops_q2})

    @property
    def conserved(self) -> bool:
        return self.chunks_in == (len(self.records) + self.drops_q1
                                  + self.drops_q2 + self.in_flight)


def run_pipeline(
    source,
    params: dict,
    model_config: TransformerConfig,
    tok_config: TokenizationConfig,
    classes: list[str] | None = None,
    queue_config: QueueConfig = QueueConfig(),
    duration_s: float | None = None,
    max_chunks: int | None = None,
    log_path: str | Path | None = None,
    stage_delays_s: tuple = (0.0, 0.0, 0.0),
) -> PipelineResult:
    """Run the three stages to completion and return the full accounting.

    Stops when the source is exhausted, max_chunks chunks have been taken,
    or duration_s has elapsed, whichever comes first; then drains. The
    stage_delays_s triple injects artificial work into (receiver, signal
    processing, inference) for throughput and drop experiments."""
    classes = list(classes) if classes is not None else [p.label for p in PROTOCOL_ORDER]
    if model_config.num_classes != len(classes):
        raise ConfigError(
            f"model emits {model_config.num_classes} classes, labels name {len(classes)}"
        )
    if (tok_config.num_slices, tok_config.token_width) != (
        model_config.num_slices, model_config.token_width,
    ):
        raise ConfigError("tokenizer and model disagree on token geometry")
    if tok_config.samples_per_sequence > INFERENCE_WINDOW:
        raise ConfigError(
            f"token window {tok_config.samples_per_sequence} exceeds the "
            f"{INFERENCE_WINDOW}-sample inference window"
        )
    if len(stage_delays_s) != 3 or any(d < 0 for d in stage_delays_s):
        raise ConfigError("stage_delays_s must be three non-negative seconds values")

    q1: queue.Queue = queue.Queue(maxsize=queue_config.q1_capacity)
    q2: queue.Queue = queue.Queue(maxsize=queue_config.q2_capacity)
    stop = threading.Event()
    counts = {"chunks_in": 0, "drops_q1": 0, "drops_q2": 0}
    depth = {"q1": 0, "q2": 0}
    durations: dict[str, list[float]] = {
        "receiver": [], "signal_processing": [], "inference": [],
    }
    records: list[PredictionRecord] = []
    delay_rx, delay_dsp, delay_inf = stage_delays_s

    def receiver():
        started = time.monotonic()
        for chunk in source:
            if stop.is_set():
                break
            if duration_s is not None and time.monotonic() - started >= duration_s:
                break
            if max_chunks is not None and counts["chunks_in"] >= max_chunks:
                break
            t0 = time.monotonic()
            if delay_rx:
                time.sleep(delay_rx)
            counts["chunks_in"] += 1
            received_ns = time.monotonic_ns()
            try:
                q1.put_nowait((chunk, received_ns))
            except queue.Full:
                counts["drops_q1"] += 1
            else:
                depth["q1"] = max(depth["q1"], q1.qsize())
            durations["receiver"].append(time.monotonic() - t0)
        q1.put(None)  # sentinel: blocking put, consumer always drains

    def dsp_worker():
        while True:
            item = q1.get()
            if item is None:
                q2.put(None)
                return
            chunk, received_ns = item
            t0 = time.monotonic()
            if delay_dsp:
                time.sleep(delay_dsp)
            window = signal_processing_transform(chunk.samples)
            processed_ns = time.monotonic_ns()
            durations["signal_processing"].append(time.monotonic() - t0)
            try:
                q2.put_nowait((chunk.sequence_number, window, received_ns, processed_ns))
            except queue.Full:
                counts["drops_q2"] += 1
            else:
                depth["q2"] = max(depth["q2"], q2.qsize())

    def inference_worker(log_fh):
        while True:
            item = q2.get()
            if item is None:
                return
            seq, window, received_ns, processed_ns = item
            t0 = time.monotonic()
            if delay_inf:
                time.sleep(delay_inf)
            tokens = inference_tokens(window, tok_config)
            scores = predict_log_scores(params, model_config, tokens)
            record = PredictionRecord(
                sequence_number=seq,
                label=classes[int(np.argmax(scores))],
                log_scores=tuple(float(s) for s in scores),
                received_ns=received_ns,
                processed_ns=processed_ns,
                predicted_ns=time.monotonic_ns(),
            )
            records.append(record)
            if log_fh is not None:
                log_fh.write(record.log_line() + "\n")
                log_fh.flush()
            durations["inference"].append(time.monotonic() - t0)

    log_fh = open(log_path, "a") if log_path is not None else None
    wall_start = time.monotonic()
    try:
        threads = [
            threading.Thread(target=receiver, name="receiver"),
            threading.Thread(target=dsp_worker, name="signal-processing"),
            threading.Thread(target=inference_worker, args=(log_fh,), name="inference"),
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        stop.set()
        if log_fh is not None:
            log_fh.close()
    wall = time.monotonic() - wall_start

    partials = int(getattr(source, "discarded_partials", 0))
    return PipelineResult(
        records=records,
        chunks_in=counts["chunks_in"] + partials,
        drops_q1=counts["drops_q1"],
        drops_q2=counts["drops_q2"],
        in_flight=partials,
        stage_durations=durations,
        max_queue_depth=dict(depth),
        wall_time_s=wall,
        log_path=Path(log_path) if log_path is not None else None,
    )
