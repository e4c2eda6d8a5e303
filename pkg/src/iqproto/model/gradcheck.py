"""Central finite-difference verification of the hand-written backward passes.

The checker upcasts a model to float64, computes analytic gradients through
the real backward path, then perturbs parameters one scalar at a time with
step h and compares (f(p+h) - f(p-h)) / 2h against the analytic value. Every
tensor is visited; very large tensors are subsampled deterministically.
"""

from __future__ import annotations

import numpy as np

from .cnn import CnnConfig, cnn_backward, cnn_forward, init_cnn_params
from .ops import bce_with_logits_loss, log_softmax, nll_loss
from .transformer import (
    TransformerConfig,
    backward,
    forward,
    init_params,
    loss_and_grads,
    trainable_names,
)

DEFAULT_STEP = 1e-4


def tiny_config(multi_label: bool = False) -> TransformerConfig:
    return TransformerConfig(
        num_slices=4, token_width=8, num_layers=1, num_heads=2, ff_width=16,
        fc_hidden=6, num_classes=3, multi_label=multi_label,
    )


def _loss_fn_transformer(params, config, x, targets) -> float:
    logits = forward(params, config, x)
    if config.multi_label:
        return bce_with_logits_loss(logits, targets)[0]
    return nll_loss(log_softmax(logits), targets)[0]


def _loss_fn_cnn(params, config, x, targets) -> float:
    return nll_loss(log_softmax(cnn_forward(params, config, x)), targets)[0]


def _compare(params, grads, loss_fn, step, max_entries, rng):
    worst = 0.0
    for name in grads:
        tensor = params[name]
        flat = tensor.reshape(-1)
        gflat = grads[name].reshape(-1)
        if flat.size > max_entries:
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        else:
            entries = np.arange(flat.size)
        for i in entries:
            keep = flat[i]
            flat[i] = keep + step
            hi = loss_fn()
            flat[i] = keep - step
            lo = loss_fn()
            flat[i] = keep
            numeric = (hi - lo) / (2.0 * step)
            denom = max(abs(numeric) + abs(gflat[i]), 1e-8)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def grad_check(
    config: TransformerConfig | CnnConfig | None = None,
    rng: np.random.Generator | None = None,
    step: float = DEFAULT_STEP,
    max_entries_per_tensor: int = 4096,
) -> float:
    """Max relative error between analytic and numeric gradients.

    Runs in float64. Returns the worst relative disagreement across every
    parameter tensor; anything above ~1e-4 means a backward bug.
    """
    rng = rng or np.random.default_rng(0)
    config = config if config is not None else tiny_config()

    if isinstance(config, CnnConfig):
        params = init_cnn_params(config, rng, dtype=np.float64)
        x = rng.standard_normal((3, config.input_width))
        targets = rng.integers(0, config.num_classes, size=3)
        logits, cache = cnn_forward(params, config, x, want_cache=True)
        _, dlogits = nll_loss(log_softmax(logits), targets)
        grads = cnn_backward(params, config, cache, dlogits)
        return _compare(
            params, grads, lambda: _loss_fn_cnn(params, config, x, targets), step,
            max_entries_per_tensor, rng,
        )

    params = init_params(config, rng, dtype=np.float64)
    # exercise the stored-statistics path with non-trivial values
    params["in_mean"] += 0.1 * rng.standard_normal(config.token_width)
    params["in_var"] *= rng.uniform(0.5, 1.5, size=config.token_width)
    x = rng.standard_normal((3, config.num_slices, config.token_width))
    if config.multi_label:
        targets = (rng.uniform(size=(3, config.num_classes)) < 0.4).astype(np.float64)
    else:
        targets = rng.integers(0, config.num_classes, size=3)
    _, grads = loss_and_grads(params, config, x, targets)
    assert set(grads) == set(trainable_names(params))
    return _compare(
        params, grads, lambda: _loss_fn_transformer(params, config, x, targets), step,
        max_entries_per_tensor, rng,
    )
