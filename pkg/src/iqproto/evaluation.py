"""Experiment harness: SNR/channel sweeps, confusion matrices, multi-label
set metrics with rank AUC, a small hyperparameter grid search, and the
CSV/plot report writer.

Sweeps reuse the training dataset machinery so evaluation windows go
through exactly the impairment chain the model was trained against, one
(channel, SNR) condition per grid point.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata, spearmanr

from .channel import ChannelModel
from .errors import ConfigError, InvalidSpec, IoError
from .model.cnn import CnnConfig, cnn_forward
from .model.training import AugmentConfig, SequenceDataset, TrainConfig, train
from .model.transformer import TransformerConfig, forward
from .tokenizer import TokenizationConfig

DEFAULT_SNR_GRID_DB = tuple(float(s) for s in range(-30, 35, 5))


def _predict_logits(params, model_config, x: np.ndarray) -> np.ndarray:
    if isinstance(model_config, CnnConfig):
        return cnn_forward(params, model_config, x)
    return forward(params, model_config, x)


def _batch_kwargs(model_config) -> dict:
    if isinstance(model_config, CnnConfig):
        return {"layout": "flat", "flat_width": model_config.input_width}
    return {"layout": "tokens"}


# ---------------------------------------------------------------------------
# confusion matrices


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are truth, columns are predictions."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise InvalidSpec(f"counts must be {k}x{k}, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise InvalidSpec("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, truth_idx, pred_idx, classes) -> "ConfusionMatrix":
        truth_idx = np.asarray(truth_idx, dtype=np.int64)
        pred_idx = np.asarray(pred_idx, dtype=np.int64)
        if truth_idx.shape != pred_idx.shape or truth_idx.size == 0:
            raise InvalidSpec("truth and predictions must align and be non-empty")
        k = len(classes)
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (truth_idx, pred_idx), 1)
        return cls(tuple(classes), counts)

    def accuracy(self) -> float:
        total = int(self.counts.sum())
        return float(np.trace(self.counts) / total) if total else float("nan")

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


# ---------------------------------------------------------------------------
# SNR / channel sweeps


@dataclass(frozen=True)
class SweepPoint:
    channel: str
    snr_db: float
    accuracy: float
    trials: int
    confusion: ConfusionMatrix

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise InvalidSpec(f"accuracy out of range: {self.accuracy}")
        # the reported number must be the confusion matrix's own trace ratio
        if abs(self.accuracy - self.confusion.accuracy()) > 1e-12:
            raise InvalidSpec("sweep accuracy disagrees with its confusion matrix")


@dataclass
class SweepResult:
    model_id: str
    classes: tuple
    points: list
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat()
    )

    def channels(self) -> list:
        seen = dict.fromkeys(p.channel for p in self.points)
        return list(seen)

    def accuracy(self, channel: str, snr_db: float) -> float:
        for p in self.points:
            if p.channel == channel and p.snr_db == snr_db:
                return p.accuracy
        raise InvalidSpec(f"no sweep point at ({channel}, {snr_db} dB)")

    def spearman_by_channel(self) -> dict:
        """Rank correlation between SNR and accuracy, per channel.

        A constant accuracy series has no defined rank correlation and
        reports NaN."""
        import warnings

        from scipy.stats import ConstantInputWarning

        out = {}
        for ch in self.channels():
            pts = sorted((p for p in self.points if p.channel == ch),
                         key=lambda p: p.snr_db)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConstantInputWarning)
                rho = spearmanr([p.snr_db for p in pts],
                                [p.accuracy for p in pts])
            out[ch] = float(rho.statistic)
        return out

    def to_rows(self) -> list:
        return [
            {
                "model": self.model_id,
                "channel": p.channel,
                "snr_db": p.snr_db,
                "accuracy": p.accuracy,
                "trials": p.trials,
            }
            for p in self.points
        ]


def snr_sweep(
    params: dict,
    model_config,
    tok_config: TokenizationConfig,
    test_pairs: list,
    channels=tuple(ChannelModel),
    snrs_db=DEFAULT_SNR_GRID_DB,
    trials_per_point: int | None = None,
    seed: int = 0,
    model_id: str = "model",
    batch_size: int = 128,
    normalize: bool = True,
    classes=None,
) -> SweepResult:
    """Accuracy over the (channel, SNR) grid on held-out bursts.

    Each grid point classifies every window (or a random subset of
    trials_per_point) under fading and noise drawn at that exact condition,
    and keeps the full confusion matrix. Points along one channel's SNR axis
    share their random draws (fading realizations, noise directions, window
    subset), so only the noise scale varies along the curve and the sweep
    isolates the SNR effect instead of re-rolling the scenario per point."""
    if not channels or not snrs_db:
        raise InvalidSpec("channel and SNR grids must be non-empty")
    if not test_pairs:
        raise InvalidSpec("test_pairs must be non-empty")
    root = np.random.default_rng(seed)
    points = []
    class_labels = None
    for channel in channels:
        channel_seed = root.integers(2**63)
        for snr in snrs_db:
            rng = np.random.default_rng(channel_seed)
            ds = SequenceDataset.from_signals(
                test_pairs,
                tok_config,
                classes=classes,
                augment=AugmentConfig(channels=(channel,),
                                      snr_range_db=(float(snr), float(snr))),
                normalize=normalize,
            )
            if class_labels is None:
                class_labels = tuple(p.label for p in ds.classes)
                if model_config.num_classes != len(class_labels):
                    raise ConfigError(
                        f"model emits {model_config.num_classes} classes, "
                        f"test set has {len(class_labels)}"
                    )
            items = np.arange(len(ds.index))
            if trials_per_point is not None and trials_per_point < items.size:
                items = rng.choice(items, size=trials_per_point, replace=False)
            truth, pred = [], []
            for lo in range(0, items.size, batch_size):
                x, y = ds.batch(items[lo : lo + batch_size], rng,
                                **_batch_kwargs(model_config))
                logits = _predict_logits(params, model_config, x)
                truth.append(y)
                pred.append(np.argmax(logits, axis=-1))
            confusion = ConfusionMatrix.from_predictions(
                np.concatenate(truth), np.concatenate(pred), class_labels
            )
            points.append(
                SweepPoint(
                    channel=channel.value,
                    snr_db=float(snr),
                    accuracy=confusion.accuracy(),
                    trials=int(items.size),
                    confusion=confusion,
                )
            )
    return SweepResult(model_id=model_id, classes=class_labels, points=points)


def sweep_to_json(sweep: SweepResult) -> str:
    """Full round-trippable dump, confusion counts included."""
    doc = {
        "model_id": sweep.model_id,
        "classes": list(sweep.classes),
        "timestamp": sweep.timestamp,
        "points": [
            {
                "channel": p.channel,
                "snr_db": p.snr_db,
                "accuracy": p.accuracy,
                "trials": p.trials,
                "counts": p.confusion.counts.tolist(),
            }
            for p in sweep.points
        ],
    }
    return json.dumps(doc, indent=1)


def sweep_from_json(text: str) -> SweepResult:
    doc = json.loads(text)
    classes = tuple(doc["classes"])
    points = [
        SweepPoint(
            channel=p["channel"],
            snr_db=float(p["snr_db"]),
            accuracy=float(p["accuracy"]),
            trials=int(p["trials"]),
            confusion=ConfusionMatrix(classes, np.asarray(p["counts"], dtype=np.int64)),
        )
        for p in doc["points"]
    ]
    return SweepResult(
        model_id=doc["model_id"], classes=classes, points=points,
        timestamp=doc.get("timestamp", ""),
    )


# ---------------------------------------------------------------------------
# multi-label set metrics


@dataclass(frozen=True)
class MultiLabelMetrics:
    exact: float
    single: float
    single_exact: float
    auc: float
    per_class: dict  # label -> {"precision", "recall", "support"}
    detected_rate: dict  # truth-set tuple -> {label: fraction predicted}
    threshold: float
    num_instances: int

    def __post_init__(self):
        # each criterion strictly relaxes the next (truth sets are non-empty)
        if not (self.single >= self.single_exact >= self.exact - 1e-12):
            raise InvalidSpec(
                f"metric ordering violated: single={self.single}, "
                f"single_exact={self.single_exact}, exact={self.exact}"
            )


def set_agreement_flags(pred: np.ndarray, truth: np.ndarray):
    """Per-instance exact / single / single-exact booleans.

    pred, truth: (N, K) boolean membership matrices. exact: sets equal;
    single: non-empty intersection; single-exact: non-empty prediction with
    no member outside the truth set."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise InvalidSpec("pred and truth must be equal-shape (N, K) matrices")
    exact = np.all(pred == truth, axis=-1)
    single = np.any(pred & truth, axis=-1)
    single_exact = np.any(pred, axis=-1) & ~np.any(pred & ~truth, axis=-1)
    return exact, single, single_exact


def rank_auc(scores: np.ndarray, positives: np.ndarray) -> float | None:
    """Mann-Whitney area under the ROC; None when one class is absent."""
    positives = np.asarray(positives, dtype=bool)
    num_pos = int(positives.sum())
    num_neg = positives.size - num_pos
    if num_pos == 0 or num_neg == 0:
        return None
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    u = ranks[positives].sum() - num_pos * (num_pos + 1) / 2.0
    return float(u / (num_pos * num_neg))


def multilabel_metrics_from_scores(
    scores: np.ndarray, truth: np.ndarray, classes, threshold: float = 0.5
) -> MultiLabelMetrics:
    """Set metrics, per-class precision/recall, and macro OvR AUC from raw
    sigmoid scores and a multi-hot truth matrix."""
    if not 0.0 < threshold < 1.0:
        raise InvalidSpec(f"threshold must lie in (0, 1), got {threshold}")
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape or scores.ndim != 2:
        raise InvalidSpec("scores and truth must be equal-shape (N, K)")
    if scores.shape[0] == 0:
        raise InsufficientData("no instances to evaluate")
    classes = tuple(classes)
    if len(classes) != scores.shape[1]:
        raise InvalidSpec("class list does not match score width")

    pred = scores >= threshold
    exact, single, single_exact = set_agreement_flags(pred, truth)

    aucs = [a for a in (rank_auc(scores[:, k], truth[:, k])
                        for k in range(len(classes))) if a is not None]
    auc = float(np.mean(aucs)) if aucs else float("nan")

    per_class = {}
    for k, label in enumerate(classes):
        tp = int(np.sum(pred[:, k] & truth[:, k]))
        fp = int(np.sum(pred[:, k] & ~truth[:, k]))
        fn = int(np.sum(~pred[:, k] & truth[:, k]))
        per_class[label] = {
            # 0/0 counts as 0: no predictions earns no credit
            "precision": tp / (tp + fp) if tp + fp else 0.0,
            "recall": tp / (tp + fn) if tp + fn else 0.0,
            "support": tp + fn,
        }

    detected: dict = {}
    for i in range(truth.shape[0]):
        key = tuple(classes[k] for k in np.flatnonzero(truth[i]))
        bucket = detected.setdefault(key, {"count": 0, "hits": np.zeros(len(classes))})
        bucket["count"] += 1
        bucket["hits"] += pred[i]
    detected_rate = {
        key: {label: float(b["hits"][k] / b["count"])
              for k, label in enumerate(classes)}
        for key, b in detected.items()
    }

    return MultiLabelMetrics(
        exact=float(exact.mean()),
        single=float(single.mean()),
        single_exact=float(single_exact.mean()),
        auc=auc,
        per_class=per_class,
        detected_rate=detected_rate,
        threshold=threshold,
        num_instances=int(scores.shape[0]),
    )


def multilabel_evaluate(
    params: dict,
    model_config,
    tok_config: TokenizationConfig,
    overlap_pairs: list,
    threshold: float = 0.5,
    seed: int = 0,
    batch_size: int = 128,
    augment: AugmentConfig | None = None,
    normalize: bool = True,
    classes=None,
) -> MultiLabelMetrics:
    """Score an overlap test set with a multi-head sigmoid model."""
    if not getattr(model_config, "multi_label", False):
        raise ConfigError("multilabel_evaluate needs a multi_label model head")
    if not 0.0 < threshold < 1.0:
        raise InvalidSpec(f"threshold must lie in (0, 1), got {threshold}")
    ds = SequenceDataset.from_signals(
        overlap_pairs, tok_config, classes=classes, multi_label=True,
        augment=augment, normalize=normalize,
    )
    rng = np.random.default_rng(seed)
    items = np.arange(len(ds.index))
    scores, truth = [], []
    for lo in range(0, items.size, batch_size):
        x, y = ds.batch(items[lo : lo + batch_size], rng,
                        **_batch_kwargs(model_config))
        logits = _predict_logits(params, model_config, x)
        scores.append(expit(logits))
        truth.append(y > 0.5)
    class_labels = tuple(p.label for p in ds.classes)
    return multilabel_metrics_from_scores(
        np.concatenate(scores), np.concatenate(truth), class_labels, threshold
    )


def metrics_oracle_check(
    rng: np.random.Generator, num_truth_sets: int = 32, num_classes: int = 5
) -> bool:
    """Compare the vectorized set metrics against direct set arithmetic over
    every predicted subset of each random non-empty truth universe."""
    subsets = list(product([False, True], repeat=num_classes))
    for _ in range(num_truth_sets):
        truth_row = np.zeros(num_classes, dtype=bool)
        truth_row[rng.choice(num_classes, size=int(rng.integers(1, num_classes + 1)),
                             replace=False)] = True
        pred = np.array(subsets, dtype=bool)
        truth = np.tile(truth_row, (len(subsets), 1))
        exact, single, single_exact = set_agreement_flags(pred, truth)
        t = set(np.flatnonzero(truth_row))
        for i, row in enumerate(subsets):
            p = {k for k, on in enumerate(row) if on}
            if bool(exact[i]) != (p == t):
                return False
            if bool(single[i]) != bool(p & t):
                return False
            if bool(single_exact[i]) != (bool(p) and p <= t):
                return False
    return True


# ---------------------------------------------------------------------------
# hyperparameter grid search


def _config_hash(entry: dict) -> str:
    packed = json.dumps(entry, sort_keys=True).encode()
    return hashlib.sha256(packed).hexdigest()[:16]


def grid_search(
    train_pairs: list,
    slice_lengths,
    batch_sizes,
    learning_rates,
    num_slices: int = 24,
    epochs: int = 3,
    seed: int = 0,
    state_path: str | Path | None = None,
    augment: AugmentConfig | None = AugmentConfig(),
    model_builder=None,
    trainer=None,
) -> list:
    """Train every (slice length, batch size, learning rate) combination at
    desk scale and rank by validation accuracy.

    Finished configurations are checkpointed to state_path keyed by a hash
    of the configuration, so an interrupted search resumes where it
    stopped. A custom trainer(slice_len, batch, lr) -> (accuracy, loss) can
    stand in for real training."""
    slice_lengths = tuple(slice_lengths)
    batch_sizes = tuple(batch_sizes)
    learning_rates = tuple(learning_rates)
    if not slice_lengths or not batch_sizes or not learning_rates:
        raise InvalidSpec("grid axes must be non-empty")

    state: dict = {}
    state_path = Path(state_path) if state_path is not None else None
    if state_path is not None and state_path.exists():
        state = json.loads(state_path.read_text())

    def default_builder(num_slices_, token_width, num_classes):
        return TransformerConfig(
            num_slices=num_slices_, token_width=token_width, num_layers=2,
            num_heads=4, fc_hidden=64, num_classes=num_classes,
        )

    build = model_builder or default_builder
    rows = []
    for s, b, lr in product(slice_lengths, batch_sizes, learning_rates):
        entry = {
            "slice_length": int(s), "batch_size": int(b),
            "learning_rate": float(lr), "epochs": int(epochs),
            "seed": int(seed), "num_slices": int(num_slices),
        }
        key = _config_hash(entry)
        if key in state:
            rows.append(state[key])
            continue
        if trainer is not None:
            accuracy, loss = trainer(int(s), int(b), float(lr))
        else:
            tok = TokenizationConfig(num_slices=num_slices, slice_len=int(s))
            ds = SequenceDataset.from_signals(train_pairs, tok, augment=augment)
            model = build(num_slices, tok.token_width, len(ds.classes))
            result = train(ds, model, TrainConfig(
                epochs=epochs, batch_size=int(b), learning_rate=float(lr),
                seed=seed, augment=augment,
            ))
            best = result.history[result.best_epoch]
            accuracy, loss = float(best["val_acc"]), float(best["val_loss"])
        row = {
            "slice_length": int(s), "batch_size": int(b),
            "learning_rate": float(lr),
            "accuracy": float(accuracy), "loss": float(loss),
        }
        rows.append(row)
        if state_path is not None:
            state[key] = row
            tmp = state_path.with_suffix(".tmp")
            tmp.write_text(json.dumps(state, indent=1))
            tmp.replace(state_path)

    rows.sort(key=lambda r: (-r["accuracy"], r["loss"], r["slice_length"],
                             r["batch_size"], r["learning_rate"]))
    return rows


# ---------------------------------------------------------------------------
# reports


def grid_rows_to_csv(rows: list) -> str:
    if not rows:
        raise InvalidSpec("no grid rows to format")
    buf = io.StringIO()
    cols = ["slice_length", "batch_size", "learning_rate", "accuracy", "loss"]
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(str(r[c]) for c in cols) + "\n")
    return buf.getvalue()


def report(
    sweeps: list,
    out_dir: str | Path,
    confusions: dict | None = None,
    dpi: int = 110,
) -> list:
    """Write sweep CSVs, the accuracy-vs-SNR figure, and confusion heatmaps.

    Everything is rendered in memory before the first byte is written, so
    invalid inputs cannot leave partial files behind."""
    if not sweeps:
        raise InvalidSpec("report needs at least one sweep result")
    for sweep in sweeps:
        if not sweep.points:
            raise InvalidSpec(f"sweep {sweep.model_id!r} has no grid points")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_texts = {}
    for sweep in sweeps:
        buf = io.StringIO()
        buf.write("model,channel,snr_db,accuracy,trials\n")
        for row in sweep.to_rows():
            buf.write(
                f"{row['model']},{row['channel']},{row['snr_db']:g},"
                f"{row['accuracy']:.6f},{row['trials']}\n"
            )
        csv_texts[f"sweep_{sweep.model_id}.csv"] = buf.getvalue()

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for sweep in sweeps:
        for ch in sweep.channels():
            pts = sorted((p for p in sweep.points if p.channel == ch),
                         key=lambda p: p.snr_db)
            ax.plot([p.snr_db for p in pts], [p.accuracy for p in pts],
                    marker="o", label=f"{sweep.model_id} / {ch}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()

    heatmaps = []
    for name, cm in (confusions or {}).items():
        hfig, hax = plt.subplots(figsize=(5.0, 4.2))
        support = np.maximum(cm.support()[:, None], 1)
        hax.imshow(cm.counts / support, cmap="Blues", vmin=0.0, vmax=1.0)
        ticks = range(len(cm.classes))
        hax.set_xticks(ticks, cm.classes, rotation=45, ha="right")
        hax.set_yticks(ticks, cm.classes)
        hax.set_xlabel("predicted")
        hax.set_ylabel("truth")
        hax.set_title(name)
        for i in ticks:
            for j in ticks:
                hax.text(j, i, str(int(cm.counts[i, j])), ha="center",
                         va="center", fontsize=8)
        hfig.tight_layout()
        heatmaps.append((f"confusion_{name}.png", hfig))

    out_dir = Path(out_dir)
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in csv_texts.items():
            path = out_dir / name
            path.write_text(text)
            written.append(path)
        curve_path = out_dir / "accuracy_vs_snr.png"
        fig.savefig(curve_path, dpi=dpi)
        written.append(curve_path)
        for name, hfig in heatmaps:
            path = out_dir / name
            hfig.savefig(path, dpi=dpi)
            written.append(path)
    except OSError as exc:
        raise IoError(f"report write failed: {exc}") from exc
    finally:
        plt.close(fig)
        for _, hfig in heatmaps:
            plt.close(hfig)
    return written
