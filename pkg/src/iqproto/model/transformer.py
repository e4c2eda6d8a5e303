"""Encoder-only transformer over interleaved-IQ token matrices, by hand.

Input is an (M, 2S) token matrix: M slices of S complex samples with I/Q
interleaved along the row. Token width doubles as the embedding dimension, so
there is no embedding lookup and no positional encoding; slice order is
whatever self-attention makes of it. Two post-norm encoder layers feed a
flatten + hidden + output head. A feature-standardization layer with stored
running statistics sits in front (see ops.frozen_standardize_forward for why
it is not a per-token norm).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .ops import (
    bce_with_logits_loss,
    frozen_standardize_backward,
    frozen_standardize_forward,
    gelu_backward,
    gelu_forward,
    layer_norm_backward,
    layer_norm_forward,
    linear_backward,
    linear_forward,
    log_softmax,
    nll_loss,
    softmax_last,
)

_BUFFER_NAMES = ("in_mean", "in_var")  # running stats, not trained


@dataclass(frozen=True)
class TransformerConfig:
    num_slices: int  # M: tokens per sequence
    token_width: int  # 2S: interleaved slice width, also the model dimension
    num_layers: int = 2
    num_heads: int = 8
    ff_width: int | None = None  # defaults to 4x the model dimension
    fc_hidden: int = 64
    num_classes: int = 4
    multi_label: bool = False

    def __post_init__(self):
        if self.ff_width is None:
            object.__setattr__(self, "ff_width", 4 * self.token_width)
        for name in ("num_slices", "token_width", "num_layers", "num_heads", "fc_hidden",
                     "num_classes", "ff_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.token_width % 2 != 0:
            raise ConfigError(f"token_width must be even (interleaved I/Q), got {self.token_width}")
        if self.token_width % self.num_heads != 0:
            raise ConfigError(
                f"token_width {self.token_width} not divisible by num_heads {self.num_heads}"
            )

    @property
    def slice_len(self) -> int:
        return self.token_width // 2

    @property
    def head_dim(self) -> int:
        return self.token_width // self.num_heads


def lg_model_config(num_classes: int = 4, multi_label: bool = False) -> TransformerConfig:
    """Large operating point: 64 slices of 128 complex samples."""
    return TransformerConfig(num_slices=64, token_width=256, num_heads=8, ff_width=1024,
                             fc_hidden=310, num_classes=num_classes, multi_label=multi_label)


def sm_model_config(num_classes: int = 4, multi_label: bool = False) -> TransformerConfig:
    """Small operating point: 24 slices of 64 complex samples."""
    return TransformerConfig(num_slices=24, token_width=128, num_heads=4, ff_width=512,
                             fc_hidden=380, num_classes=num_classes, multi_label=multi_label)


def desk_model_config(num_classes: int = 4, multi_label: bool = False) -> TransformerConfig:
    """Reduced variant for CPU-budget experiments: 24 slices of 32 samples."""
    return TransformerConfig(num_slices=24, token_width=64, num_heads=4, ff_width=256,
                             fc_hidden=64, num_classes=num_classes, multi_label=multi_label)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(config: TransformerConfig, rng: np.random.Generator,
                dtype=np.float32) -> dict[str, np.ndarray]:
    """Fresh parameter tensors in a deterministic, checkpoint-stable order."""
    d, f = config.token_width, config.ff_width
    p: dict[str, np.ndarray] = {}
    p["in_mean"] = np.zeros(d, dtype=dtype)
    p["in_var"] = np.ones(d, dtype=dtype)
    p["in_gain"] = np.ones(d, dtype=dtype)
    p["in_bias"] = np.zeros(d, dtype=dtype)
    for l in range(config.num_layers):
        for name in ("wq", "wk", "wv", "wo"):
            p[f"layer{l}_{name}"] = _xavier(rng, d, d, dtype)
            if name == "wk":
                # no key bias: it shifts every score for a query by the same
                # constant, which softmax cancels, so its gradient is zero
                continue
            p[f"layer{l}_{name[1]}b"] = np.zeros(d, dtype=dtype)
        p[f"layer{l}_ln1_gain"] = np.ones(d, dtype=dtype)
        p[f"layer{l}_ln1_bias"] = np.zeros(d, dtype=dtype)
        p[f"layer{l}_ff_w1"] = _xavier(rng, d, f, dtype)
        p[f"layer{l}_ff_b1"] = np.zeros(f, dtype=dtype)
        p[f"layer{l}_ff_w2"] = _xavier(rng, f, d, dtype)
        p[f"layer{l}_ff_b2"] = np.zeros(d, dtype=dtype)
        p[f"layer{l}_ln2_gain"] = np.ones(d, dtype=dtype)
        p[f"layer{l}_ln2_bias"] = np.zeros(d, dtype=dtype)
    flat = config.num_slices * d
    p["fc_w"] = _xavier(rng, flat, config.fc_hidden, dtype)
    p["fc_b"] = np.zeros(config.fc_hidden, dtype=dtype)
    p["out_w"] = _xavier(rng, config.fc_hidden, config.num_classes, dtype)
    p["out_b"] = np.zeros(config.num_classes, dtype=dtype)
    return p


def trainable_names(params: dict[str, np.ndarray]) -> list[str]:
    return [k for k in params if k not in _BUFFER_NAMES]


def param_count(config: TransformerConfig) -> int:
    """Trainable parameter total, computed analytically."""
    d, f = config.token_width, config.ff_width
    per_layer = 4 * d * d + 3 * d + 2 * 2 * d + (d * f + f) + (f * d + d)
    head = (config.num_slices * d) * config.fc_hidden + config.fc_hidden
    head += config.fc_hidden * config.num_classes + config.num_classes
    return 2 * d + config.num_layers * per_layer + head


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    b, m, d = x.shape
    return x.reshape(b, m, num_heads, d // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, m, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, m, h * dh)


def forward(params: dict[str, np.ndarray], config: TransformerConfig,
            x: np.ndarray, want_cache: bool = False):
    """Token matrices (B, M, 2S) -> logits (B, C). Pure function of params.

    Accepts a single (M, 2S) matrix as a batch of one. The cache returned
    with want_cache=True is consumed by backward().
    """
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1:] != (config.num_slices, config.token_width):
        raise ShapeError(
            f"expected (B, {config.num_slices}, {config.token_width}) tokens, got {x.shape}"
        )
    x = x.astype(params["fc_w"].dtype, copy=False)

    cache: dict = {"single": single}
    y, cache["in"] = frozen_standardize_forward(
        x, params["in_mean"], params["in_var"], params["in_gain"], params["in_bias"]
    )
    scale = 1.0 / np.sqrt(config.head_dim)
    for l in range(config.num_layers):
        lc: dict = {"x": y}
        q, lc["q_lin"] = linear_forward(y, params[f"layer{l}_wq"], params[f"layer{l}_qb"])
        k = y @ params[f"layer{l}_wk"]
        v, lc["v_lin"] = linear_forward(y, params[f"layer{l}_wv"], params[f"layer{l}_vb"])
        qh, kh, vh = (_split_heads(t, config.num_heads) for t in (q, k, v))
        scores = (qh @ kh.swapaxes(-1, -2)) * scale
        attn = softmax_last(scores)
        ctx = attn @ vh
        lc.update(qh=qh, kh=kh, vh=vh, attn=attn)
        merged = _merge_heads(ctx)
        proj, lc["o_lin"] = linear_forward(merged, params[f"layer{l}_wo"], params[f"layer{l}_ob"])
        h1, lc["ln1"] = layer_norm_forward(
            y + proj, params[f"layer{l}_ln1_gain"], params[f"layer{l}_ln1_bias"]
        )
        ff1, lc["ff1_lin"] = linear_forward(h1, params[f"layer{l}_ff_w1"], params[f"layer{l}_ff_b1"])
        ff1a, lc["gelu"] = gelu_forward(ff1)
        ff2, lc["ff2_lin"] = linear_forward(ff1a, params[f"layer{l}_ff_w2"], params[f"layer{l}_ff_b2"])
        y, lc["ln2"] = layer_norm_forward(
            h1 + ff2, params[f"layer{l}_ln2_gain"], params[f"layer{l}_ln2_bias"]
        )
        cache[f"layer{l}"] = lc

    b = y.shape[0]
    flat = y.reshape(b, -1)
    hid, cache["fc_lin"] = linear_forward(flat, params["fc_w"], params["fc_b"])
    hida, cache["fc_gelu"] = gelu_forward(hid)
    logits, cache["out_lin"] = linear_forward(hida, params["out_w"], params["out_b"])
    if single:
        logits = logits[0]
    if want_cache:
        cache["shape"] = y.shape
        return logits, cache
    return logits


def backward(params: dict[str, np.ndarray], config: TransformerConfig,
             cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every trainable tensor."""
    if cache["single"]:
        dlogits = dlogits[None]
    grads: dict[str, np.ndarray] = {}

    dhida, grads["out_w"], grads["out_b"] = linear_backward(dlogits, cache["out_lin"])
    dhid = gelu_backward(dhida, cache["fc_gelu"])
    dflat, grads["fc_w"], grads["fc_b"] = linear_backward(dhid, cache["fc_lin"])
    dy = dflat.reshape(cache["shape"])

    scale = 1.0 / np.sqrt(config.head_dim)
    for l in reversed(range(config.num_layers)):
        lc = cache[f"layer{l}"]
        dz2, grads[f"layer{l}_ln2_gain"], grads[f"layer{l}_ln2_bias"] = layer_norm_backward(
            dy, lc["ln2"]
        )
        dff2 = dz2
        dff1a, grads[f"layer{l}_ff_w2"], grads[f"layer{l}_ff_b2"] = linear_backward(
            dff2, lc["ff2_lin"]
        )
        dff1 = gelu_backward(dff1a, lc["gelu"])
        dh1_ff, grads[f"layer{l}_ff_w1"], grads[f"layer{l}_ff_b1"] = linear_backward(
            dff1, lc["ff1_lin"]
        )
        dh1 = dz2 + dh1_ff  # residual around the feed-forward
        dz1, grads[f"layer{l}_ln1_gain"], grads[f"layer{l}_ln1_bias"] = layer_norm_backward(
            dh1, lc["ln1"]
        )
        dproj = dz1
        dmerged, grads[f"layer{l}_wo"], grads[f"layer{l}_ob"] = linear_backward(
            dproj, lc["o_lin"]
        )
        dctx = _split_heads(dmerged, config.num_heads)
        attn, qh, kh, vh = lc["attn"], lc["qh"], lc["kh"], lc["vh"]
        dattn = dctx @ vh.swapaxes(-1, -2)
        dvh = attn.swapaxes(-1, -2) @ dctx
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dqh = (dscores @ kh) * scale
        dkh = (dscores.swapaxes(-1, -2) @ qh) * scale
        dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
        dy_q, grads[f"layer{l}_wq"], grads[f"layer{l}_qb"] = linear_backward(dq, lc["q_lin"])
        xk, wk = lc["x"], params[f"layer{l}_wk"]
        dy_k = dk @ wk.T
        grads[f"layer{l}_wk"] = xk.reshape(-1, xk.shape[-1]).T @ dk.reshape(-1, dk.shape[-1])
        dy_v, grads[f"layer{l}_wv"], grads[f"layer{l}_vb"] = linear_backward(dv, lc["v_lin"])
        dy = dz1 + dy_q + dy_k + dy_v  # residual around attention

    _, grads["in_gain"], grads["in_bias"] = frozen_standardize_backward(
        dy, cache["in"], params["in_gain"]
    )
    return grads


def loss_and_grads(params: dict[str, np.ndarray], config: TransformerConfig,
                   x: np.ndarray, targets: np.ndarray):
    """One training step's loss and gradients for either head type."""
    logits, cache = forward(params, config, x, want_cache=True)
    if config.multi_label:
        loss, dlogits = bce_with_logits_loss(logits, targets.astype(logits.dtype))
    else:
        loss, dlogits = nll_loss(log_softmax(logits), targets)
    return loss, backward(params, config, cache, dlogits)


def update_input_stats(params: dict[str, np.ndarray], x: np.ndarray,
                       momentum: float = 0.1) -> None:
    """EMA update of the stored input statistics from one batch of tokens.

    Called by the training loop between steps; inference never touches it, so
    deployed statistics reflect the training distribution.
    """
    x = np.asarray(x, dtype=params["in_mean"].dtype)
    flat = x.reshape(-1, x.shape[-1])
    params["in_mean"] += momentum * (flat.mean(axis=0) - params["in_mean"])
    params["in_var"] += momentum * (flat.var(axis=0) - params["in_var"])


def predict_log_scores(params: dict[str, np.ndarray], config: TransformerConfig,
                       x: np.ndarray) -> np.ndarray:
    """Per-class log scores: log-softmax posteriors for the single-label head,
    log-sigmoid detection scores for the multi-label head."""
    logits = forward(params, config, x)
    if config.multi_label:
        return -np.logaddexp(0.0, -logits)
    return log_softmax(logits)
