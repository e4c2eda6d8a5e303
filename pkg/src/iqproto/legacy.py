"""Correlation-based burst format detector, the non-learned benchmark.

Three stages, cheapest test first:

1. direct-sequence preamble cross-correlation (catches the single-carrier
   format before any OFDM logic runs),
2. a lag-16 periodicity gate over a short averaging window that says "some
   OFDM training field is present",
3. per-format templates over the post-training signaling region, where the
   OFDM families genuinely differ; the candidate with the highest metric
   above its own threshold wins, ties broken densest-format-first.

Every metric is a normalized magnitude in [0, 1]: amplitude and carrier
phase cancel, so a flat fading tap cannot move a decision. Noise, however,
compresses every correlation toward sqrt(S/(S+N)); thresholds placed
midway between a template's matched and strongest-unmatched clean
responses therefore start rejecting real bursts once that compression
eats the clean margin, which is what makes this detector collapse near
0 dB while remaining essentially perfect above 15 dB.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve

from .channel import ChannelModel, apply_fading, draw_realization
from .dsp import rational_resample
from .errors import DegenerateSignal, InsufficientSamples, InvalidSpec
from .signals import ComplexSignal, add_awgn, power_normalize
from .waveforms import (
    BurstSpec,
    Protocol,
    dsss_preamble,
    generate_burst,
    he_signal_fields,
    ht_signal_fields,
    nonht_signal_fields,
)

DETECTOR_RATE_HZ = 20e6
_GATE_LAG = 16  # short-training-field period at the detector rate
_GATE_WINDOW = 48  # averaging span: three training periods
# where each stage-3 template begins inside a clean burst: the plain legacy
# signaling symbol follows the 320-sample training head directly, the modern
# families' extra fields follow their own signaling symbol at 400
_TEMPLATE_OFFSET = {"nonht": 320, "ht": 400, "he": 400}
_STAGE3_PRIORITY = ("he", "ht", "nonht")
_STAGE3_PROTOCOL = {
    "nonht": Protocol.G80211,
    "ht": Protocol.N80211,
    "he": Protocol.AX80211,
}


@dataclass(frozen=True)
class LegacyThresholds:
    """Per-metric decision levels; see calibrate_thresholds for provenance."""

    dsss: float
    ofdm_gate: float
    nonht: float
    ht: float
    he: float


# frozen from calibrate_thresholds(np.random.default_rng(0)); regenerate with
# the same call if the waveform definitions ever change
DEFAULT_THRESHOLDS = LegacyThresholds(
    dsss=0.5322145914102956,
    ofdm_gate=0.7470621009331658,
    nonht=0.7112612180545134,
    ht=0.6993604529722302,
    he=0.6472018570648352,
)


@dataclass(frozen=True)
class DetectionResult:
    protocol: Protocol | None  # None means "no burst found"
    peak_metric: float  # the metric that decided the outcome
    offset_samples: int  # estimated burst start at the detector rate
    metrics: dict  # every evaluated stage's peak, for diagnostics


def _normalized_xcorr(x: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Sliding |<window, template>| / (||window|| ||template||), valid mode."""
    num = np.abs(fftconvolve(x, np.conj(template[::-1]), mode="valid"))
    energy = np.convolve(np.abs(x) ** 2, np.ones(template.size), mode="valid")
    denom = np.sqrt(np.maximum(energy, 1e-300) * np.sum(np.abs(template) ** 2))
    return num / denom


def _plateau_metric(x: np.ndarray, lag: int = _GATE_LAG,
                    window: int = _GATE_WINDOW) -> np.ndarray:
    """Lag-periodicity ratio in [0, 1]; 1 on an exactly periodic stretch."""
    prod = x[:-lag] * np.conj(x[lag:])
    half = 0.5 * (np.abs(x[:-lag]) ** 2 + np.abs(x[lag:]) ** 2)
    ones = np.ones(window)
    corr = np.abs(np.convolve(prod, ones, mode="valid"))
    energy = np.convolve(half, ones, mode="valid")
    return corr / np.maximum(energy, 1e-300)


def _stage3_templates() -> dict[str, np.ndarray]:
    return {"nonht": nonht_signal_fields(), "ht": ht_signal_fields(),
            "he": he_signal_fields()}


def _min_input_samples() -> int:
    return dsss_preamble().samples.size + _GATE_LAG


def _to_detector_rate(signal: ComplexSignal) -> np.ndarray:
    if signal.sample_rate_hz == DETECTOR_RATE_HZ:
        return signal.samples
    ratio = Fraction(int(round(DETECTOR_RATE_HZ)), int(round(signal.sample_rate_hz)))
    if max(ratio.numerator, ratio.denominator) > 1000:
        raise InvalidSpec(
            f"no practical rational conversion from {signal.sample_rate_hz} Hz "
            f"to the {DETECTOR_RATE_HZ:.0f} Hz detector rate"
        )
    return rational_resample(signal, ratio.numerator, ratio.denominator).samples


def _first_peak(corr: np.ndarray) -> tuple[float, int]:
    """Peak value and the earliest index attaining it (within float slop).

    Bursts that repeat their deterministic head tie the template metric at
    every repetition; the earliest tie is the burst start."""
    peak = float(corr.max())
    return peak, int(np.flatnonzero(corr >= peak * (1.0 - 1e-9))[0])


def detect(signal: ComplexSignal,
           thresholds: LegacyThresholds = DEFAULT_THRESHOLDS) -> DetectionResult:
    """Classify one capture; None when nothing clears its threshold.

    The single-carrier check runs first and wins outright; among the OFDM
    formats the highest above-threshold template metric decides, with the
    densest format preferred on exact ties (its template is longest, so a
    tie means the shorter template matched only by inclusion)."""
    x = _to_detector_rate(signal)
    if x.size < _min_input_samples():
        raise InsufficientSamples(
            f"detector needs at least {_min_input_samples()} samples at "
            f"{DETECTOR_RATE_HZ:.0f} Hz, got {x.size}"
        )
    x = power_normalize(ComplexSignal(x, DETECTOR_RATE_HZ)).samples

    dsss_peak, dsss_pos = _first_peak(_normalized_xcorr(x, dsss_preamble().samples))
    metrics = {"dsss": dsss_peak}
    if dsss_peak >= thresholds.dsss:
        return DetectionResult(Protocol.B80211, dsss_peak, dsss_pos, metrics)

    gate_peak, gate_pos = _first_peak(_plateau_metric(x))
    metrics["ofdm_gate"] = gate_peak
    if gate_peak < thresholds.ofdm_gate:
        return DetectionResult(None, gate_peak, gate_pos, metrics)

    peaks = {}
    for name, template in _stage3_templates().items():
        metrics[name], peaks[name] = _first_peak(_normalized_xcorr(x, template))
    candidates = [
        name for name in _STAGE3_PRIORITY
        if metrics[name] >= getattr(thresholds, name)
    ]
    if not candidates:
        best = max(_STAGE3_PRIORITY, key=lambda n: metrics[n])
        return DetectionResult(None, metrics[best],
                               peaks[best] - _TEMPLATE_OFFSET[best], metrics)
    winner = max(candidates, key=lambda n: metrics[n])  # priority order breaks ties
    return DetectionResult(_STAGE3_PROTOCOL[winner], metrics[winner],
                           peaks[winner] - _TEMPLATE_OFFSET[winner], metrics)


_THREE_WAY = {
    Protocol.B80211: "single-carrier",
    Protocol.G80211: "legacy-ofdm",
    Protocol.N80211: "modern-ofdm",
    Protocol.AX80211: "modern-ofdm",
}


def group_label(protocol: Protocol | None, grouping: str = "four-way"):
    """Decision granularity: four-way keeps every format distinct,
    three-way pools the two modern OFDM families."""
    if grouping == "four-way":
        return protocol
    if grouping == "three-way":
        return None if protocol is None else _THREE_WAY[protocol]
    raise InvalidSpec(f"unknown grouping {grouping!r}")


def detection_accuracy(predicted: list, truth: list,
                       grouping: str = "four-way") -> float:
    """Fraction of captures whose predicted group matches the true group.

    Entries may be Protocol values or None (noise / nothing detected)."""
    if len(predicted) != len(truth) or not truth:
        raise InvalidSpec("predicted and truth must be equal-length, non-empty")
    hits = sum(
        group_label(p, grouping) == group_label(t, grouping)
        for p, t in zip(predicted, truth)
    )
    return hits / len(truth)


def detection_table(
    rng: np.random.Generator,
    channels=tuple(ChannelModel),
    snrs_db=tuple(range(-30, 35, 5)),
    trials_per_point: int = 100,
    protocols=(Protocol.B80211, Protocol.G80211, Protocol.N80211, Protocol.AX80211),
    thresholds: LegacyThresholds = DEFAULT_THRESHOLDS,
    grouping: str = "four-way",
) -> list[dict]:
    """Detection accuracy over a (channel, SNR) grid, protocols cycled evenly.

    Each trial synthesizes a fresh burst, draws a fresh channel realization
    and noise, and scores the detected format against ground truth. Rows:
    {channel, snr_db, accuracy, trials}."""
    if not channels or not snrs_db or trials_per_point < 1:
        raise InvalidSpec("channels, snrs_db, and trials_per_point must be non-empty")
    rows = []
    for channel in channels:
        for snr_db in snrs_db:
            preds, truths = [], []
            for trial in range(trials_per_point):
                protocol = protocols[trial % len(protocols)]
                sig = generate_burst(BurstSpec(protocol), rng)
                sig = apply_fading(sig, draw_realization(channel, rng))
                sig = add_awgn(sig, float(snr_db), rng)
                preds.append(detect(sig, thresholds).protocol)
                truths.append(protocol)
            rows.append({
                "channel": channel.value,
                "snr_db": float(snr_db),
                "accuracy": detection_accuracy(preds, truths, grouping),
                "trials": trials_per_point,
            })
    return rows


def calibrate_thresholds(
    rng: np.random.Generator,
    num_noise_captures: int = 100,
    capture_len: int = 30_000,
    false_alarm_quantile: float = 0.99,
) -> LegacyThresholds:
    """Place each threshold from measured noise peaks and clean responses.

    A correlation template's level is the larger of its noise-only peak
    quantile (false-alarm control) and the midpoint between its matched
    clean response and its strongest response to any *other* clean format
    (symmetric margin against both miss and cross-format errors). The OFDM
    gate's level is the midpoint between its noise quantile and the weakest
    clean training-field response. Calibration refuses with DegenerateSignal
    if any level would reject the format it exists to accept."""
    names = ("dsss", "nonht", "ht", "he")
    templates = dict(zip(names, (dsss_preamble().samples, *(_stage3_templates()[n]
                                                            for n in names[1:]))))
    noise_peaks: dict[str, list[float]] = {n: [] for n in (*names, "ofdm_gate")}
    for _ in range(num_noise_captures):
        x = (rng.standard_normal(capture_len) + 1j * rng.standard_normal(capture_len))
        x *= np.sqrt(0.5)
        for name, tpl in templates.items():
            noise_peaks[name].append(float(_normalized_xcorr(x, tpl).max()))
        noise_peaks["ofdm_gate"].append(float(_plateau_metric(x).max()))
    noise_q = {k: float(np.quantile(v, false_alarm_quantile)) for k, v in noise_peaks.items()}

    own = {"dsss": Protocol.B80211, **_STAGE3_PROTOCOL}
    clean = {
        p: generate_burst(BurstSpec(p), np.random.default_rng(0)).samples
        for p in (Protocol.B80211, Protocol.G80211, Protocol.N80211, Protocol.AX80211)
    }
    levels = {}
    for name, tpl in templates.items():
        responses = {p: float(_normalized_xcorr(x, tpl).max()) for p, x in clean.items()}
        matched = responses.pop(own[name])
        level = max(noise_q[name], 0.5 * (matched + max(responses.values())))
        if level >= matched:
            raise DegenerateSignal(
                f"{name} threshold {level:.3f} would reject its own format "
                f"(clean response {matched:.3f})"
            )
        levels[name] = level

    weakest = min(
        float(_plateau_metric(clean[p]).max())
        for p in (Protocol.G80211, Protocol.N80211, Protocol.AX80211)
    )
    ofdm_gate = 0.5 * (noise_q["ofdm_gate"] + weakest)
    if ofdm_gate >= weakest:
        raise DegenerateSignal(
            f"gate threshold {ofdm_gate:.3f} exceeds the weakest clean "
            f"training-field response {weakest:.3f}"
        )
    return LegacyThresholds(dsss=levels["dsss"], ofdm_gate=ofdm_gate,
                            nonht=levels["nonht"], ht=levels["ht"], he=levels["he"])
