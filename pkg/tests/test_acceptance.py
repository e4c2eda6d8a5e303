"""Acceptance suite: one numbered end-to-end check per release criterion.

Each test prints the measured numbers it judged, so the -v line plus the
captured output form the verdict. The desk-scale model (reduced width,
trained in minutes on one CPU core) is built once and shared by the
classification, baseline-comparison, ablation, pipeline, and monotonicity
checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from iqproto.channel import ChannelModel
from iqproto.dsp import rational_resample, resample_output_length
from iqproto.errors import InsufficientSamples
from iqproto.evaluation import SweepResult, metrics_oracle_check, snr_sweep
from iqproto.legacy import detection_table
from iqproto.model.gradcheck import grad_check, tiny_config
from iqproto.model.training import AugmentConfig, SequenceDataset, TrainConfig, train
from iqproto.model.transformer import (
    TransformerConfig,
    desk_model_config,
    lg_model_config,
    param_count,
    sm_model_config,
)
from iqproto.pipeline import (
    CHUNK_COMPLEX_SAMPLES,
    SOURCE_RATE_HZ,
    SyntheticSource,
    run_pipeline,
)
from iqproto.signals import ComplexSignal, add_awgn, mean_power
from iqproto.tokenizer import TokenizationConfig, detokenize, large_config, tokenize
from iqproto.waveforms import PROTOCOL_ORDER, BurstSpec, generate_burst

SEED = 2024
DESK_TOK = TokenizationConfig(num_slices=24, slice_len=32)
# dense training windows: every burst position contributes several phases
DESK_TRAIN_TOK = TokenizationConfig(num_slices=24, slice_len=32, stride=256)
# the desk recipe trains against clean passthrough and flat fading only;
# the frequency-selective profiles stay out of its training distribution
TRAIN_CHANNELS = (ChannelModel.NONE, ChannelModel.RAYLEIGH)
TRAIN_SNR_RANGE_DB = (0.0, 30.0)
BURSTS_PER_PROTOCOL = 50
TRAIN_SPLIT = 40


@dataclass
class DeskArtifacts:
    params: dict
    model_config: TransformerConfig
    classes: list
    test_pairs: list
    anchor_sweep: SweepResult  # train-distribution channels x {0, 30} dB
    build_seconds: float
    history: list = field(default_factory=list)


def _burst_rng(protocol_index: int, burst_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence((SEED, protocol_index, burst_index))
    return np.random.Generator(np.random.PCG64(seq))


@pytest.fixture(scope="module")
def desk() -> DeskArtifacts:
    """Generate 50 bursts per protocol, train the reduced-width model on the
    first 40 of each, and pre-compute its accuracy at the anchor grid."""
    t0 = time.monotonic()
    train_pairs, test_pairs = [], []
    for p_idx, proto in enumerate(PROTOCOL_ORDER):
        for b_idx in range(BURSTS_PER_PROTOCOL):
            burst = generate_burst(BurstSpec(proto), _burst_rng(p_idx, b_idx))
            dest = train_pairs if b_idx < TRAIN_SPLIT else test_pairs
            dest.append((burst, proto))
    augment = AugmentConfig(channels=TRAIN_CHANNELS, snr_range_db=TRAIN_SNR_RANGE_DB)
    dataset = SequenceDataset.from_signals(train_pairs, DESK_TRAIN_TOK, augment=augment)
    result = train(
        dataset,
        desk_model_config(),
        TrainConfig(
            epochs=24,
            batch_size=122,
            learning_rate=1e-3,
            seed=SEED,
            augment=augment,
            plateau_patience=3,
        ),
    )
    build_seconds = time.monotonic() - t0
    anchor_sweep = snr_sweep(
        result.params,
        result.model_config,
        DESK_TOK,
        test_pairs,
        channels=TRAIN_CHANNELS,
        snrs_db=(0.0, 30.0),
        seed=7,
        model_id="desk",
    )
    return DeskArtifacts(
        params=result.params,
        model_config=result.model_config,
        classes=result.classes,
        test_pairs=test_pairs,
        anchor_sweep=anchor_sweep,
        build_seconds=build_seconds,
        history=result.history,
    )


def test_01_gradient_check_tiny_transformer():
    # 1 encoder layer, 4 slices, token width 8: small enough that central
    # differences over every parameter stay under a minute
    t0 = time.monotonic()
    worst = grad_check(tiny_config(), rng=np.random.default_rng(3))
    elapsed = time.monotonic() - t0
    print(f"max relative gradient error {worst:.3e} ({elapsed:.1f}s)")
    assert elapsed < 60.0
    assert worst < 1e-4


def test_02_tokenizer_round_trip_and_large_geometry():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        m = int(rng.integers(1, 9))
        s = int(rng.integers(1, 9))
        cfg = TokenizationConfig(num_slices=m, slice_len=s)
        extra = int(rng.integers(0, 4))
        samples = rng.standard_normal(m * s + extra) + 1j * rng.standard_normal(m * s + extra)
        tokens = tokenize(samples, cfg)
        assert tokens.shape == (m, 2 * s)
        assert np.array_equal(detokenize(tokens), samples[: m * s])
    lg = large_config()
    assert lg.samples_per_sequence == 8192
    window = rng.standard_normal(8192) + 1j * rng.standard_normal(8192)
    tokens = tokenize(window, lg)
    assert tokens.shape == (64, 256)
    assert np.array_equal(detokenize(tokens), window)
    with pytest.raises(InsufficientSamples):
        tokenize(window[:8191], lg)
    print("10000 round trips bit-exact; 8192 samples -> (64, 256)")


def test_03_awgn_calibration():
    results = {}
    for target_idx, snr_db in enumerate((-10.0, 0.0, 10.0, 20.0)):
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng((131, target_idx, seed))
            x = rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)
            x /= np.sqrt(mean_power(x))  # exactly unit mean power
            noisy = add_awgn(ComplexSignal(x, 20e6), snr_db, rng)
            noise = noisy.samples - x
            measured = 10.0 * np.log10(mean_power(x) / mean_power(noise))
            hits += abs(measured - snr_db) <= 0.2
        results[snr_db] = hits
    print("seeds within +/-0.2 dB per target:", results)
    for snr_db, hits in results.items():
        assert hits >= 99, f"{snr_db} dB: only {hits}/100 seeds in tolerance"


def test_04_resampler_lengths_and_tone_frequency():
    assert resample_output_length(12_800, 16, 25) == 8_192
    assert resample_output_length(12_900, 16, 25) == 8_256
    rng = np.random.default_rng(17)
    for n, want in ((12_800, 8_192), (12_900, 8_256)):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        out = rational_resample(ComplexSignal(x, 31.25e6), 16, 25)
        assert len(out) == want
        assert out.sample_rate_hz == pytest.approx(20e6)

    t = np.arange(12_900) / 31.25e6
    tone = np.exp(2j * np.pi * 2e6 * t)
    out = rational_resample(ComplexSignal(tone, 31.25e6), 16, 25)
    spec = np.fft.fft(out.samples * np.hanning(len(out)), 1 << 18)
    freqs = np.fft.fftfreq(1 << 18, d=1.0 / 20e6)
    peak_hz = freqs[int(np.argmax(np.abs(spec)))]
    rel_err = abs(peak_hz - 2e6) / 2e6
    print(f"tone peak {peak_hz:.1f} Hz, relative error {rel_err:.2e}")
    assert rel_err < 1e-3


def test_05_desk_training_anchors(desk):
    clean_30 = desk.anchor_sweep.accuracy("none", 30.0)
    faded_0 = desk.anchor_sweep.accuracy("rayleigh", 0.0)
    print(
        f"build {desk.build_seconds:.0f}s; accuracy none/30dB {clean_30:.4f}, "
        f"rayleigh/0dB {faded_0:.4f}"
    )
    assert desk.build_seconds <= 30 * 60
    assert clean_30 >= 0.95
    assert faded_0 >= 0.80


def test_06_transformer_beats_legacy_at_0db(desk):
    rows = detection_table(
        np.random.default_rng(SEED + 1),
        channels=TRAIN_CHANNELS,
        snrs_db=(0.0, 30.0),
        trials_per_point=100,
    )
    legacy = {(r["channel"], r["snr_db"]): r["accuracy"] for r in rows}
    names = [ch.value for ch in TRAIN_CHANNELS]
    legacy_0 = float(np.mean([legacy[(ch, 0.0)] for ch in names]))
    model_0 = float(np.mean([desk.anchor_sweep.accuracy(ch, 0.0) for ch in names]))
    print(
        f"0 dB mean accuracy: transformer {model_0:.4f} vs legacy {legacy_0:.4f}; "
        f"legacy none/30dB {legacy[('none', 30.0)]:.3f}"
    )
    assert legacy[("none", 30.0)] >= 0.95
    assert model_0 - legacy_0 >= 0.15


def test_07_multilabel_metric_oracle():
    # 32 random truth sets x all 32 predicted subsets = 1024 instances
    assert metrics_oracle_check(np.random.default_rng(5), num_truth_sets=32)
    print("1024 instances match brute-force set arithmetic")


def test_08_power_normalization_ablation(desk):
    scale = 10.0 ** (-30.0 / 20.0)
    rescaled = [
        (ComplexSignal(sig.samples * scale, sig.sample_rate_hz), label)
        for sig, label in desk.test_pairs
    ]

    def accuracy_at_clean_30(pairs, normalize):
        sweep = snr_sweep(
            desk.params,
            desk.model_config,
            DESK_TOK,
            pairs,
            channels=(ChannelModel.NONE,),
            snrs_db=(30.0,),
            seed=11,
            normalize=normalize,
            model_id="ablation",
        )
        return sweep.points[0].accuracy

    drop_with = accuracy_at_clean_30(desk.test_pairs, True) - accuracy_at_clean_30(
        rescaled, True
    )
    drop_without = accuracy_at_clean_30(desk.test_pairs, False) - accuracy_at_clean_30(
        rescaled, False
    )
    print(
        f"-30 dB rescale accuracy drop: {drop_without * 100:.1f} points raw, "
        f"{drop_with * 100:.1f} points normalized"
    )
    assert drop_without > 0.20
    assert abs(drop_with) < 0.05


def test_09_pipeline_liveness_and_conservation(desk, tmp_path):
    chunk_period_s = CHUNK_COMPLEX_SAMPLES / SOURCE_RATE_HZ

    # 60 s at the capture cadence; inference cannot keep up, so the queues
    # must shed load without ever losing count of a chunk
    log_path = tmp_path / "predictions.log"
    result = run_pipeline(
        SyntheticSource(
            "g", np.random.default_rng(21), snr_db=20.0, pacing_s=chunk_period_s
        ),
        desk.params,
        desk.model_config,
        DESK_TOK,
        duration_s=60.0,
        log_path=log_path,
    )
    seqs = [r.sequence_number for r in result.records]
    assert all(a < b for a, b in zip(seqs, seqs[1:])), "sequence numbers not increasing"
    assert result.conserved, "chunk accounting does not balance"
    assert max(result.max_queue_depth.values()) <= 2
    assert len(log_path.read_text().splitlines()) == len(result.records)
    print(
        f"60s run: {result.chunks_in} chunks in, {len(result.records)} predictions, "
        f"drops q1={result.drops_q1} q2={result.drops_q2}, "
        f"max depth {result.max_queue_depth}"
    )

    # ten short runs with randomized pacing and per-stage jitter: every one
    # must drain and balance, which is the no-deadlock evidence
    for i in range(10):
        jrng = np.random.default_rng((77, i))
        jitter = run_pipeline(
            SyntheticSource(
                "n",
                np.random.default_rng(i),
                pacing_s=chunk_period_s * float(jrng.uniform(0.5, 2.0)),
                chunk_count=120,
            ),
            desk.params,
            desk.model_config,
            DESK_TOK,
            stage_delays_s=tuple(jrng.uniform(0.0, 0.004, size=3)),
            duration_s=30.0,
        )
        assert jitter.conserved, f"jitter run {i} lost chunks"
        assert max(jitter.max_queue_depth.values()) <= 2

    # paced just slower than the slowest stage so nothing drops; sustained
    # rate must then sit within 20% of that stage's service rate
    paced = run_pipeline(
        SyntheticSource("b", np.random.default_rng(5), pacing_s=0.066, chunk_count=60),
        desk.params,
        desk.model_config,
        DESK_TOK,
        stage_delays_s=(0.020, 0.040, 0.060),
    )
    assert paced.drops_q1 == 0 and paced.drops_q2 == 0
    timings = paced.profile()
    bottleneck_s = max(stats["mean_s"] for stats in timings.stages.values())
    ratio = timings.predictions_per_second * bottleneck_s
    print(
        f"throughput {timings.predictions_per_second:.2f}/s vs bottleneck "
        f"{1.0 / bottleneck_s:.2f}/s (ratio {ratio:.3f})"
    )
    assert abs(ratio - 1.0) <= 0.20


def test_10_parameter_count_anchors():
    lg = param_count(lg_model_config())
    sm = param_count(sm_model_config())
    print(f"param counts: lg {lg:,}, sm {sm:,}")
    assert abs(lg - 6.8e6) / 6.8e6 <= 0.15
    assert abs(sm - 1.6e6) / 1.6e6 <= 0.15


def test_11_accuracy_monotone_in_snr(desk):
    # full 13-point grid on every channel profile; the graceful-degradation
    # requirement applies to the channels inside the training distribution.
    # The frequency-selective profiles were never trained on, and their
    # high-SNR accuracy is limited by channel mismatch rather than noise, so
    # their rank correlations are reported here but not gated on.
    sweep = snr_sweep(
        desk.params, desk.model_config, DESK_TOK, desk.test_pairs, seed=13,
        model_id="desk",
    )
    rho = sweep.spearman_by_channel()
    print("spearman(SNR, accuracy):", {ch: round(r, 4) for ch, r in rho.items()})
    for channel in TRAIN_CHANNELS:
        assert rho[channel.value] > 0.9, (
            f"{channel.value}: spearman {rho[channel.value]:.4f}"
        )
