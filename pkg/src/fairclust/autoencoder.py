"""Encoder/decoder pair and the reconstruction loss.

For discrete sensitive attributes the model can carry one decoder per group;
each sample is then reconstructed by the decoder of its own group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .errors import ShapeError


@dataclass
class AutoencoderModel:
    encoder: nn.MlpParams
    decoders: list[nn.MlpParams]
    groupwise: bool = False

    def __post_init__(self):
        if not self.decoders:
            raise ValueError("at least one decoder is required")
        for dec in self.decoders:
            if dec.d_in != self.encoder.d_out:
                raise ShapeError("decoder input must match encoder output")
            if dec.d_out != self.encoder.d_in:
                raise ShapeError("decoder output must match encoder input")
        if not self.groupwise and len(self.decoders) != 1:
            raise ValueError("shared mode uses exactly one decoder")

    @property
    def latent_dim(self) -> int:
        return self.encoder.d_out

    @property
    def input_dim(self) -> int:
        return self.encoder.d_in

    @property
    def n_groups(self) -> int:
        return len(self.decoders)

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(self.encoder.copy(), [d.copy() for d in self.decoders], self.groupwise)


def build_autoencoder(
    input_dim: int,
    latent_dim: int = 16,
    hidden: Sequence[int] = (64, 32),
    n_groups: int | None = None,
    seed: int | np.random.Generator = 0,
) -> AutoencoderModel:
    """Mirrored relu MLPs; `n_groups` >= 1 switches on group-wise decoders."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    enc = nn.init_params(nn.MlpSpec.build(input_dim, hidden, latent_dim), rng)
    dec_spec = nn.MlpSpec.build(latent_dim, tuple(reversed(hidden)), input_dim)
    if n_groups is None:
        return AutoencoderModel(enc, [nn.init_params(dec_spec, rng)], groupwise=False)
    if n_groups < 1:
        raise ValueError("n_groups must be positive")
    return AutoencoderModel(enc, [nn.init_params(dec_spec, rng) for _ in range(n_groups)], groupwise=True)


def encode(model: AutoencoderModel, x) -> np.ndarray:
    return nn.predict(model.encoder, x)


def _group_rows(model: AutoencoderModel, n: int, group_ids) -> list[np.ndarray]:
    if not model.groupwise:
        return [np.arange(n)]
    if group_ids is None:
        raise ValueError("group-wise decoding needs group ids")
    g = np.asarray(group_ids)
    if g.shape != (n,):
        raise ShapeError(f"expected {n} group ids, got shape {g.shape}")
    if np.any(g < 0) or np.any(g >= model.n_groups):
        raise ValueError(f"group id out of range [0, {model.n_groups})")
    return [np.flatnonzero(g == t) for t in range(model.n_groups)]


def decode_forward(model: AutoencoderModel, z, group_ids=None):
    """Reconstruct `z`, returning `(x_hat, caches)` for `decode_backward`."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise ShapeError(f"expected latent batch with {model.latent_dim} columns, got {z.shape}")
    rows = _group_rows(model, z.shape[0], group_ids)
    x_hat = np.empty((z.shape[0], model.input_dim))
    caches = []
    for dec, idx in zip(model.decoders, rows):
        if idx.size == 0:
            caches.append(None)
            continue
        acts = nn.forward(dec, z[idx])
        x_hat[idx] = acts[-1]
        caches.append(acts)
    return x_hat, (rows, caches)


def decode(model: AutoencoderModel, z, group_ids=None) -> np.ndarray:
    return decode_forward(model, z, group_ids)[0]


def decode_backward(model: AutoencoderModel, cache, grad_x_hat) -> tuple[list[nn.MlpParams], np.ndarray]:
    """Gradients for every decoder plus dLoss/dz."""
    rows, caches = cache
    grad_x_hat = np.asarray(grad_x_hat, dtype=np.float64)
    grad_z = np.zeros((grad_x_hat.shape[0], model.latent_dim))
    dec_grads = []
    for dec, idx, acts in zip(model.decoders, rows, caches):
        if acts is None:
            dec_grads.append(dec.zeros_like())
            continue
        g, gz = nn.backward(dec, acts, grad_x_hat[idx])
        grad_z[idx] = gz
        dec_grads.append(g)
    return dec_grads, grad_z


def recon_loss(x, x_hat) -> float:
    """Mean over the batch of the squared Euclidean reconstruction error."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"{x.shape} vs {x_hat.shape}")
    if x.ndim == 1:
        x, x_hat = x[None, :], x_hat[None, :]
    return float(np.sum((x_hat - x) ** 2) / x.shape[0])


def recon_loss_grad(x, x_hat) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    return 2.0 * (x_hat - x) / x.shape[0]
