"""Self-describing single-file model container.

Layout: 4-byte magic, little-endian uint32 header length, UTF-8 JSON header,
then the raw tensor blobs in header order, each little-endian float32. The
header carries the model type, its config, the class labels, and optional
tokenization info, so a checkpoint is loadable with no out-of-band knowledge.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .cnn import CnnConfig
from .transformer import TransformerConfig

_MAGIC = b"IQM1"
_FORMAT_VERSION = 1


def save_model(
    path: str | Path,
    params: dict[str, np.ndarray],
    config: TransformerConfig | CnnConfig,
    classes: list[str],
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    model_type = "cnn" if isinstance(config, CnnConfig) else "transformer"
    header = {
        "format_version": _FORMAT_VERSION,
        "model_type": model_type,
        "config": asdict(config),
        "classes": list(classes),
        "extra": extra or {},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for tensor in params.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return path


def load_model(path: str | Path):
    """Returns (params, config, classes, extra). FormatError on any damage."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise FormatError(f"{path} is not a model checkpoint (bad magic)")
    header_len = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if len(raw) < 8 + header_len:
        raise FormatError(f"{path} truncated inside the header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path} header is not valid JSON: {e}") from e
    if header.get("format_version") != _FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('format_version')!r}")

    model_type = header.get("model_type")
    if model_type == "transformer":
        cfg_dict = dict(header["config"])
        config = TransformerConfig(**cfg_dict)
    elif model_type == "cnn":
        cfg_dict = dict(header["config"])
        for key in ("channels", "kernels", "strides"):
            cfg_dict[key] = tuple(cfg_dict[key])
        config = CnnConfig(**cfg_dict)
    else:
        raise FormatError(f"unknown model_type {model_type!r}")

    params: dict[str, np.ndarray] = {}
    offset = 8 + header_len
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(raw):
            raise FormatError(f"{path} truncated inside tensor {spec['name']!r}")
        params[spec["name"]] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path} has {len(raw) - offset} trailing bytes")
    return params, config, list(header.get("classes", [])), header.get("extra", {})
