"""Convolutional baseline over a single interleaved slice.

Three strided 1-D convolutions into a wide dense layer, sized to roughly
four million parameters at the 1x512 input. Exists to give the transformer a
conventional reference point, so it shares the ops, optimizer, checkpoint
container, and gradient checker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .ops import linear_backward, linear_forward, relu_backward, relu_forward


@dataclass(frozen=True)
class CnnConfig:
    input_width: int = 512  # interleaved reals: 256 complex samples
    channels: tuple[int, ...] = (64, 64, 128)
    kernels: tuple[int, ...] = (7, 5, 3)
    strides: tuple[int, ...] = (2, 2, 2)
    dense_width: int = 512
    num_classes: int = 4

    def __post_init__(self):
        if not len(self.channels) == len(self.kernels) == len(self.strides):
            raise ConfigError("channels, kernels, strides must have equal length")
        if self.input_width < 2 or self.input_width % 2:
            raise ConfigError(f"input_width must be even and >= 2, got {self.input_width}")
        length = self.input_width
        for k, s in zip(self.kernels, self.strides):
            if length < k:
                raise ConfigError("input too short for the convolution stack")
            length = (length - k) // s + 1

    @property
    def conv_output_len(self) -> int:
        length = self.input_width
        for k, s in zip(self.kernels, self.strides):
            length = (length - k) // s + 1
        return length


def cnn_config(num_classes: int = 4) -> CnnConfig:
    return CnnConfig(num_classes=num_classes)


def cnn_param_count(config: CnnConfig) -> int:
    total, c_in = 0, 1
    for c_out, k in zip(config.channels, config.kernels):
        total += c_in * c_out * k + c_out
        c_in = c_out
    flat = config.channels[-1] * config.conv_output_len
    total += flat * config.dense_width + config.dense_width
    total += config.dense_width * config.num_classes + config.num_classes
    return total


def init_cnn_params(config: CnnConfig, rng: np.random.Generator,
                    dtype=np.float32) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    c_in = 1
    for i, (c_out, k) in enumerate(zip(config.channels, config.kernels)):
        limit = np.sqrt(6.0 / (c_in * k + c_out * k))
        p[f"conv{i}_w"] = rng.uniform(-limit, limit, size=(c_out, c_in, k)).astype(dtype)
        p[f"conv{i}_b"] = np.zeros(c_out, dtype=dtype)
        c_in = c_out
    flat = config.channels[-1] * config.conv_output_len
    limit = np.sqrt(6.0 / (flat + config.dense_width))
    p["dense_w"] = rng.uniform(-limit, limit, size=(flat, config.dense_width)).astype(dtype)
    p["dense_b"] = np.zeros(config.dense_width, dtype=dtype)
    limit = np.sqrt(6.0 / (config.dense_width + config.num_classes))
    p["out_w"] = rng.uniform(-limit, limit, size=(config.dense_width, config.num_classes)).astype(dtype)
    p["out_b"] = np.zeros(config.num_classes, dtype=dtype)
    return p


def _conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """x (B, C, L) * w (F, C, K) -> (B, F, Lout), via gathered patches."""
    _, _, length = x.shape
    f, c, k = w.shape
    lout = (length - k) // stride + 1
    idx = stride * np.arange(lout)[:, None] + np.arange(k)[None, :]  # (Lout, K)
    patches = x[:, :, idx]  # (B, C, Lout, K)
    pm = patches.transpose(0, 2, 1, 3).reshape(x.shape[0], lout, c * k)
    out = pm @ w.reshape(f, c * k).T + b
    return out.transpose(0, 2, 1), (x.shape, idx, pm, w, stride)


def _conv1d_backward(dout: np.ndarray, cache):
    x_shape, idx, pm, w, stride = cache
    f, c, k = w.shape
    dm = dout.transpose(0, 2, 1)  # (B, Lout, F)
    db = dm.reshape(-1, f).sum(axis=0)
    dw = (dm.reshape(-1, f).T @ pm.reshape(-1, c * k)).reshape(f, c, k)
    dpm = dm @ w.reshape(f, c * k)  # (B, Lout, C*K)
    dpatches = dpm.reshape(dout.shape[0], -1, c, k).transpose(0, 2, 1, 3)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    np.add.at(dx, (slice(None), slice(None), idx), dpatches)
    return dx, dw, db


def cnn_forward(params: dict[str, np.ndarray], config: CnnConfig,
                x: np.ndarray, want_cache: bool = False):
    """Interleaved vectors (B, input_width) -> logits (B, C)."""
    x = np.asarray(x)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != config.input_width:
        raise ShapeError(f"expected (B, {config.input_width}) inputs, got {x.shape}")
    x = x.astype(params["dense_w"].dtype, copy=False)

    cache: dict = {"single": single}
    y = x[:, None, :]  # one input channel
    for i, stride in enumerate(config.strides):
        y, cache[f"conv{i}"] = _conv1d_forward(y, params[f"conv{i}_w"], params[f"conv{i}_b"], stride)
        y, cache[f"relu{i}"] = relu_forward(y)
    cache["conv_shape"] = y.shape
    flat = y.reshape(y.shape[0], -1)
    hid, cache["dense_lin"] = linear_forward(flat, params["dense_w"], params["dense_b"])
    hida, cache["dense_relu"] = relu_forward(hid)
    logits, cache["out_lin"] = linear_forward(hida, params["out_w"], params["out_b"])
    if single:
        logits = logits[0]
    return (logits, cache) if want_cache else logits


def cnn_backward(params: dict[str, np.ndarray], config: CnnConfig,
                 cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    if cache["single"]:
        dlogits = dlogits[None]
    grads: dict[str, np.ndarray] = {}
    dhida, grads["out_w"], grads["out_b"] = linear_backward(dlogits, cache["out_lin"])
    dhid = relu_backward(dhida, cache["dense_relu"])
    dflat, grads["dense_w"], grads["dense_b"] = linear_backward(dhid, cache["dense_lin"])
    dy = dflat.reshape(cache["conv_shape"])
    for i in reversed(range(len(config.strides))):
        dy = relu_backward(dy, cache[f"relu{i}"])
        dy, grads[f"conv{i}_w"], grads[f"conv{i}_b"] = _conv1d_backward(dy, cache[f"conv{i}"])
    return grads


def cnn_input_from_window(window: np.ndarray, input_width: int = 512) -> np.ndarray:
    """First input_width/2 complex samples of a window, interleaved."""
    need = input_width // 2
    if window.size < need:
        raise ShapeError(f"window of {window.size} samples cannot fill width {input_width}")
    out = np.empty(input_width, dtype=np.float64)
    out[0::2] = window[:need].real
    out[1::2] = window[:need].imag
    return out
