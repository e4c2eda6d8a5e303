"""Differentiable primitives and the optimizer.

Each forward returns whatever its backward needs as an explicit cache tuple;
backwards return gradients in the same order as their inputs. All functions
are pure and dtype-preserving so the same code path runs float32 in
production and float64 under the finite-difference checker.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import TrainingDiverged

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, (x, w)


def linear_backward(dout: np.ndarray, cache):
    x, w = cache
    dx = dout @ w.T
    # collapse any leading batch axes onto the weight gradient
    dw = x.reshape(-1, x.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])
    db = dout.reshape(-1, dout.shape[-1]).sum(axis=0)
    return dx, dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), (x > 0.0)


def relu_backward(dout: np.ndarray, mask: np.ndarray):
    return dout * mask


def gelu_forward(x: np.ndarray):
    """Exact Gaussian-error-linear unit, x * Phi(x). Smooth everywhere, which
    keeps finite-difference gradient checks meaningful at moderate steps."""
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, (x, cdf)


def gelu_backward(dout: np.ndarray, cache):
    x, cdf = cache
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dout * (cdf + x * pdf)


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    """Standard per-token normalization over the last axis."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    x_hat = (x - mu) * inv_std
    return x_hat * gain + bias, (x_hat, inv_std, gain)


def layer_norm_backward(dout: np.ndarray, cache):
    x_hat, inv_std, gain = cache
    d = x_hat.shape[-1]
    dgain = (dout * x_hat).reshape(-1, d).sum(axis=0)
    dbias = dout.reshape(-1, d).sum(axis=0)
    dxhat = dout * gain
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - x_hat * (dxhat * x_hat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def frozen_standardize_forward(x: np.ndarray, mean: np.ndarray, var: np.ndarray,
                               gain: np.ndarray, bias: np.ndarray):
    """Feature standardization with stored statistics plus a learnable affine.

    mean/var are constants for gradient purposes (they evolve only through
    their EMA update between steps), so a global rescale of the input moves
    the activations instead of being silently absorbed; that is the property
    the power-normalization ablation measures.
    """
    x_hat = (x - mean) / np.sqrt(var + LN_EPS)
    return x_hat * gain + bias, x_hat


def frozen_standardize_backward(dout: np.ndarray, x_hat: np.ndarray, gain: np.ndarray):
    d = x_hat.shape[-1]
    dgain = (dout * x_hat).reshape(-1, d).sum(axis=0)
    dbias = dout.reshape(-1, d).sum(axis=0)
    dx = dout * gain
    return dx, dgain, dbias


def softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def nll_loss(log_probs: np.ndarray, labels: np.ndarray):
    """Mean negative log likelihood; gradient is w.r.t. the logits that
    produced log_probs via log_softmax."""
    n = log_probs.shape[0]
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)  # softmax probabilities
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def bce_with_logits_loss(logits: np.ndarray, targets: np.ndarray):
    """Numerically stable mean binary cross entropy over batch x classes."""
    # log(1 + exp(-|x|)) + max(x, 0) - x*y
    loss = np.mean(np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits))))
    probs = 1.0 / (1.0 + np.exp(-logits))
    dlogits = (probs - targets) / logits.size
    return float(loss), dlogits


class Adam:
    """Adam with bias correction; state keyed like the parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for key, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient in {key}")
            m = self.m[key]
            v = self.v[key]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            params[key] -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
