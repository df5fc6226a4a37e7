"""Binary checkpoint container.

Layout (little-endian):

    b"FCIB"                       magic
    u32 version                   = 1
    u32 n, n bytes                UTF-8 JSON blob (configs, network roles, activations)
    u32 network count
    per network:
        u32 layer count L
        L + 1 x u32               layer sizes, input first
        per layer: out*in f64 weights (row-major), then out f64 biases
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import nn
from .autoencoder import AutoencoderModel
from .errors import FormatError, ModeError
from .fairness import Predictor
from .trainer import FairClusterModels, TrainConfig

MAGIC = b"FCIB"
VERSION = 1


def _pack_network(params: nn.MlpParams) -> bytes:
    sizes = params.spec.layer_sizes
    parts = [struct.pack("<I", params.spec.n_layers), struct.pack(f"<{len(sizes)}I", *sizes)]
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _read_network(r: _Reader, activations: list[str]) -> nn.MlpParams:
    n_layers = r.u32()
    if n_layers != len(activations):
        raise FormatError("layer count disagrees with the stored activations")
    sizes = [r.u32() for _ in range(n_layers + 1)]
    spec = nn.MlpSpec(tuple(sizes), tuple(activations))
    weights, biases = [], []
    for i in range(n_layers):
        out_dim, in_dim = sizes[i + 1], sizes[i]
        weights.append(r.f64(out_dim * in_dim).reshape(out_dim, in_dim))
        biases.append(r.f64(out_dim))
    return nn.MlpParams(spec, weights, biases)


def save_checkpoint(models: FairClusterModels, config: TrainConfig, path, extra: dict | None = None) -> None:
    """Write models and config; `extra` is stored in the JSON blob verbatim."""
    model = models.autoencoder
    networks = [("encoder", model.encoder)]
    networks += [(f"decoder{t}", d) for t, d in enumerate(model.decoders)]
    networks.append(("predictor", models.predictor.params))
    meta = {
        "train_config": config.to_dict(),
        "groupwise": model.groupwise,
        "mode": models.predictor.mode,
        "n_groups": models.predictor.n_groups,
        "networks": [{"role": role, "activations": list(p.spec.activations)} for role, p in networks],
        "extra": extra or {},
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(blob)), blob, struct.pack("<I", len(networks))]
    parts += [_pack_network(p) for _, p in networks]
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, expected_mode: str | None = None) -> tuple[FairClusterModels, TrainConfig, dict]:
    """Read a checkpoint back; returns `(models, config, extra)`."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic bytes; not a checkpoint")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
        config = TrainConfig.from_dict(meta["train_config"])
        roles = meta["networks"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt config blob: {exc}") from None
    n_networks = r.u32()
    if n_networks != len(roles):
        raise FormatError("network count disagrees with the config blob")
    nets = [_read_network(r, info["activations"]) for info in roles]
    if r.pos != len(buf):
        raise FormatError("trailing bytes after the last network")

    mode = meta["mode"]
    if expected_mode is not None and mode != expected_mode:
        raise ModeError(f"checkpoint was trained for {mode} sensitive attributes, not {expected_mode}")
    try:
        model = AutoencoderModel(nets[0], nets[1:-1], meta["groupwise"])
        pred = Predictor(mode, nets[-1], meta["n_groups"])
    except ValueError as exc:
        raise FormatError(f"inconsistent networks: {exc}") from None
    return FairClusterModels(model, pred), config, meta.get("extra", {})
