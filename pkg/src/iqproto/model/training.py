"""Training loop with on-the-fly channel/noise augmentation.

Bursts stay clean in memory; every time a window is batched it gets a fresh
fading realization and noise draw, so no two epochs see identical inputs.
One Generator seeds initialization, shuffling, and augmentation: a fixed seed
reproduces the loss curve bit for bit on the same platform.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..capture import Manifest, ManifestEntry, read_capture
from ..channel import ChannelModel, apply_fading, draw_realization, sample_random_condition
from ..errors import ConfigError, InsufficientData, InvalidLabel, TrainingDiverged
from ..signals import ComplexSignal, add_awgn
from ..tokenizer import TokenizationConfig, index_sequences, tokenize
from ..waveforms import PROTOCOL_ORDER, Protocol, parse_protocol
from .cnn import CnnConfig, cnn_backward, cnn_forward, cnn_input_from_window
from .ops import Adam, log_softmax, nll_loss
from .transformer import TransformerConfig, forward, loss_and_grads, update_input_stats

_MAX_PROFILE_DELAY_S = 80e-9  # longest tap of any fading profile


@dataclass(frozen=True)
class AugmentConfig:
    """Which impairments to draw per window. None disables a dimension."""

    channels: tuple[ChannelModel, ...] = tuple(ChannelModel)
    snr_range_db: tuple[float, float] | None = (-30.0, 30.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 122
    learning_rate: float = 2e-4
    val_fraction: float = 0.2
    seed: int = 0
    augment: AugmentConfig | None = AugmentConfig()
    normalize: bool = True
    stats_momentum: float = 0.1
    plateau_patience: int | None = None  # epochs without val improvement
    plateau_factor: float = 0.1
    plateau_floor: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


def cnn_train_config(**overrides) -> TrainConfig:
    """Baseline defaults: big batches, 1e-3 Adam decaying on plateau to 1e-4."""
    base = dict(epochs=5, batch_size=512, learning_rate=1e-3,
                plateau_patience=1, plateau_factor=0.1, plateau_floor=1e-4)
    base.update(overrides)
    return TrainConfig(**base)


class SequenceDataset:
    """Windows over in-memory bursts, augmented and tokenized per batch."""

    def __init__(
        self,
        bursts: list[np.ndarray],
        sample_rates: list[float],
        labels: list,
        tok_config: TokenizationConfig,
        classes: list[Protocol] | None = None,
        multi_label: bool = False,
        augment: AugmentConfig | None = None,
        normalize: bool = True,
    ):
        if len(bursts) != len(labels) or len(bursts) != len(sample_rates):
            raise ConfigError("bursts, sample_rates, and labels must align")
        self.bursts = [np.asarray(b, dtype=np.complex128) for b in bursts]
        self.sample_rates = list(sample_rates)
        if classes is None:
            self.classes = list(PROTOCOL_ORDER)
        else:
            # class lists arrive as Protocol members or their label strings
            self.classes = [parse_protocol(c) if isinstance(c, str) else c
                            for c in classes]
        self.multi_label = multi_label
        self.tok = tok_config
        self.augment = augment
        self.normalize = normalize
        self.labels = [self._encode_label(lab) for lab in labels]
        self.index: list[tuple[int, int]] = []
        for b_idx, burst in enumerate(self.bursts):
            for off in index_sequences(burst.size, tok_config):
                self.index.append((b_idx, off))
        if not self.index:
            raise InsufficientData(
                f"no burst provides {tok_config.samples_per_sequence} samples for a window"
            )

    def _encode_label(self, label):
        protocols = label if isinstance(label, (list, tuple)) else [label]
        protocols = [parse_protocol(p) if isinstance(p, str) else p for p in protocols]
        for p in protocols:
            if p not in self.classes:
                raise InvalidLabel(f"{p} is not among the dataset classes {self.classes}")
        if self.multi_label:
            hot = np.zeros(len(self.classes), dtype=np.float32)
            for p in protocols:
                hot[self.classes.index(p)] = 1.0
            return hot
        return self.classes.index(protocols[0])

    def __len__(self) -> int:
        return len(self.index)

    @classmethod
    def from_manifest(
        cls,
        manifest: Manifest,
        entries: list[ManifestEntry],
        tok_config: TokenizationConfig,
        **kwargs,
    ) -> "SequenceDataset":
        bursts, rates, labels = [], [], []
        for entry in entries:
            sig, _ = read_capture(manifest.resolve(entry))
            bursts.append(sig.samples)
            rates.append(sig.sample_rate_hz)
            labels.append(list(entry.protocols))
        return cls(bursts, rates, labels, tok_config, **kwargs)

    @classmethod
    def from_signals(
        cls, pairs: list[tuple[ComplexSignal, object]], tok_config: TokenizationConfig, **kwargs
    ) -> "SequenceDataset":
        bursts = [sig.samples for sig, _ in pairs]
        rates = [sig.sample_rate_hz for sig, _ in pairs]
        labels = [lab for _, lab in pairs]
        return cls(bursts, rates, labels, tok_config, **kwargs)

    def window(self, item: int, rng: np.random.Generator) -> tuple[np.ndarray, object]:
        """One augmented, normalized complex window plus its label."""
        b_idx, off = self.index[item]
        burst = self.bursts[b_idx]
        fs = self.sample_rates[b_idx]
        n = self.tok.samples_per_sequence
        if self.augment is not None:
            # stream consumers hand the model windows at arbitrary phase, so
            # each augmented draw also jitters the start within its stride
            room = min(self.tok.effective_stride, burst.size - n - off)
            if room > 0:
                off += int(rng.integers(0, room))
            # carry enough left context that tap spillover into the window
            # matches fading the whole burst, then slice the context away
            ctx = min(int(np.ceil(_MAX_PROFILE_DELAY_S * fs)), off)
            chunk = ComplexSignal(burst[off - ctx : off + n], fs)
            snr_range = self.augment.snr_range_db
            model, snr = sample_random_condition(
                rng, models=self.augment.channels, snr_range_db=snr_range or (0.0, 0.0)
            )
            if snr_range is None:
                snr = None
            faded = apply_fading(chunk, draw_realization(model, rng))
            window = ComplexSignal(faded.samples[ctx:], fs)
            window = add_awgn(window, snr, rng).samples
        else:
            window = burst[off : off + n]
        if self.normalize:
            window = window / np.sqrt(np.mean(window.real**2 + window.imag**2))
        return window, self.labels[b_idx]

    def batch(
        self, items: np.ndarray, rng: np.random.Generator, layout: str = "tokens",
        flat_width: int = 512,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Stack windows into model inputs: token matrices or flat vectors."""
        n = len(items)
        ys = []
        if layout == "tokens":
            x = np.empty((n, self.tok.num_slices, self.tok.token_width), dtype=np.float32)
            for row, item in enumerate(items):
                window, label = self.window(int(item), rng)
                x[row] = tokenize(window, self.tok)
                ys.append(label)
        elif layout == "flat":
            x = np.empty((n, flat_width), dtype=np.float32)
            for row, item in enumerate(items):
                window, label = self.window(int(item), rng)
                x[row] = cnn_input_from_window(window, flat_width)
                ys.append(label)
        else:
            raise ConfigError(f"unknown batch layout {layout!r}")
        y = np.stack(ys) if self.multi_label else np.asarray(ys, dtype=np.int64)
        return x, y


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    model_config: TransformerConfig | CnnConfig
    classes: list[str]
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def final_val_acc(self) -> float:
        return self.history[-1]["val_acc"] if self.history else float("nan")


def history_to_csv(history: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "train_loss", "val_loss", "val_acc", "learning_rate"]
        )
        writer.writeheader()
        for row in history:
            writer.writerow({k: row[k] for k in writer.fieldnames})
    return path


def _model_fns(model_config):
    if isinstance(model_config, CnnConfig):
        def loss_grads(params, x, y):
            logits, cache = cnn_forward(params, model_config, x, want_cache=True)
            loss, dlogits = nll_loss(log_softmax(logits), y)
            return loss, cnn_backward(params, model_config, cache, dlogits)

        def predict(params, x):
            return cnn_forward(params, model_config, x)

        return loss_grads, predict, "flat"

    def loss_grads(params, x, y):
        return loss_and_grads(params, model_config, x, y)

    def predict(params, x):
        return forward(params, model_config, x)

    return loss_grads, predict, "tokens"


def _accuracy(logits: np.ndarray, y: np.ndarray, multi_label: bool) -> float:
    if multi_label:
        pred = logits > 0.0  # sigmoid threshold 0.5 in logit space
        return float(np.mean(np.all(pred == (y > 0.5), axis=-1)))
    return float(np.mean(np.argmax(logits, axis=-1) == y))


def train(
    dataset: SequenceDataset,
    model_config: TransformerConfig | CnnConfig,
    train_config: TrainConfig,
) -> TrainResult:
    """Optimize on an 80/20 sequence split; returns best-validation parameters.

    Adam(beta1=0.9, beta2=0.999); single-label heads train under mean NLL,
    the multi-label head under mean binary cross entropy. Augmentation is
    applied to training and validation batches alike. Raises
    TrainingDiverged the moment the loss stops being finite.
    """
    rng = np.random.default_rng(train_config.seed)
    multi_label = getattr(model_config, "multi_label", False)
    if multi_label != dataset.multi_label:
        raise ConfigError("model and dataset disagree about multi_label")

    if isinstance(model_config, CnnConfig):
        from .cnn import init_cnn_params

        params = init_cnn_params(model_config, rng)
    else:
        from .transformer import init_params

        params = init_params(model_config, rng)
    loss_grads, predict, layout = _model_fns(model_config)
    batch_kw = (
        {"flat_width": model_config.input_width}
        if isinstance(model_config, CnnConfig)
        else {}
    )

    order = rng.permutation(len(dataset))
    split = int(round((1.0 - train_config.val_fraction) * len(order)))
    train_idx, val_idx = order[:split], order[split:]
    if train_idx.size == 0 or val_idx.size == 0:
        raise InsufficientData(
            f"{len(dataset)} sequences cannot support a {train_config.val_fraction:.0%} validation split"
        )

    adam = Adam(params, train_config.learning_rate)
    history: list[dict] = []
    best_val = np.inf
    best_params = None
    best_epoch = -1
    stale_epochs = 0
    bs = train_config.batch_size

    for epoch in range(train_config.epochs):
        perm = rng.permutation(train_idx)
        losses = []
        for start in range(0, perm.size, bs):
            x, y = dataset.batch(perm[start : start + bs], rng, layout, **batch_kw)
            loss, grads = loss_grads(params, x, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}")
            adam.step(params, grads)
            if not isinstance(model_config, CnnConfig):
                update_input_stats(params, x, train_config.stats_momentum)
            losses.append(loss)

        val_losses, val_accs = [], []
        for start in range(0, val_idx.size, bs):
            x, y = dataset.batch(val_idx[start : start + bs], rng, layout, **batch_kw)
            logits = predict(params, x)
            if multi_label:
                from .ops import bce_with_logits_loss

                vloss, _ = bce_with_logits_loss(logits, y.astype(logits.dtype))
            else:
                vloss, _ = nll_loss(log_softmax(logits), y)
            val_losses.append(vloss)
            val_accs.append(_accuracy(logits, y, multi_label))
        val_loss = float(np.mean(val_losses))
        val_acc = float(np.mean(val_accs))
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_loss": val_loss,
                "val_acc": val_acc,
                "learning_rate": adam.learning_rate,
            }
        )

        if val_loss < best_val - 1e-9:
            best_val = val_loss
            best_params = copy.deepcopy(params)
            best_epoch = epoch
            stale_epochs = 0
        else:
            stale_epochs += 1
            if (
                train_config.plateau_patience is not None
                and stale_epochs >= train_config.plateau_patience
            ):
                adam.learning_rate = max(
                    train_config.plateau_floor, adam.learning_rate * train_config.plateau_factor
                )
                stale_epochs = 0

    classes = [p.label for p in dataset.classes]
    return TrainResult(
        params=best_params if best_params is not None else params,
        model_config=model_config,
        classes=classes,
        history=history,
        best_epoch=best_epoch,
    )
