"""Variational sensitive-attribute predictor and the CLUB fairness loss.

The predictor q(G|Z) is a categorical softmax head for discrete groups or a
Gaussian (mean, log-variance) head for continuous values. It is fitted by
maximum likelihood and then held fixed while the encoder minimises the
contrastive log-ratio upper bound on I(Z;G).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .errors import ModeError, ShapeError

PROB_FLOOR = 1e-12
LOGVAR_CLAMP = 10.0


@dataclass
class Predictor:
    mode: str
    params: nn.MlpParams
    n_groups: int | None = None

    def __post_init__(self):
        if self.mode == "discrete":
            if self.n_groups is None or self.n_groups < 2:
                raise ValueError("a discrete predictor needs at least two groups")
            if self.params.d_out != self.n_groups or self.params.spec.activations[-1] != "softmax":
                raise ShapeError("discrete head must be a softmax over the groups")
        elif self.mode == "continuous":
            if self.params.d_out != 2:
                raise ShapeError("continuous head outputs (mean, log-variance)")
        else:
            raise ModeError(f"unknown sensitive mode {self.mode!r}")

    def copy(self) -> "Predictor":
        return Predictor(self.mode, self.params.copy(), self.n_groups)


def build_predictor(
    latent_dim: int,
    mode: str,
    n_groups: int | None = None,
    hidden: Sequence[int] = (16, 16),
    seed: int | np.random.Generator = 0,
) -> Predictor:
    if mode == "discrete":
        spec = nn.MlpSpec.build(latent_dim, hidden, n_groups or 0, output="softmax")
    elif mode == "continuous":
        spec = nn.MlpSpec.build(latent_dim, hidden, 2)
    else:
        raise ModeError(f"unknown sensitive mode {mode!r}")
    return Predictor(mode, nn.init_params(spec, seed), n_groups if mode == "discrete" else None)


def _check(pred: Predictor, mode: str, z, g):
    if pred.mode != mode:
        raise ModeError(f"{mode} loss requested for a {pred.mode} predictor")
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(g)
    if g.shape != (z.shape[0],):
        raise ShapeError(f"{z.shape[0]} latent rows vs sensitive shape {g.shape}")
    if mode == "discrete":
        g = g.astype(np.int64)
        if np.any(g < 0) or np.any(g >= pred.n_groups):
            raise ValueError(f"group id out of range [0, {pred.n_groups})")
    else:
        g = g.astype(np.float64)
    return z, g


def _gaussian_head(out: np.ndarray):
    mu = out[:, 0]
    raw = out[:, 1]
    logvar = np.clip(raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)
    inside = (raw > -LOGVAR_CLAMP) & (raw < LOGVAR_CLAMP)
    return mu, logvar, inside


def _log_prob_floor(probs: np.ndarray):
    return np.log(np.maximum(probs, PROB_FLOOR)), probs > PROB_FLOOR


# --- likelihood losses (train the predictor) ------------------------------------


def predictor_loss_discrete(pred: Predictor, z, g) -> float:
    return _discrete_nll(pred, z, g)[0]


def predictor_loss_continuous(pred: Predictor, z, g) -> float:
    return _gaussian_nll(pred, z, g)[0]


def _discrete_nll(pred: Predictor, z, g, with_grad: bool = False):
    z, g = _check(pred, "discrete", z, g)
    acts = nn.forward(pred.params, z)
    probs = acts[-1]
    logp, live = _log_prob_floor(probs)
    rows = np.arange(len(g))
    loss = float(-logp[rows, g].mean())
    if not with_grad:
        return loss, None, None
    upstream = np.zeros_like(probs)
    upstream[rows, g] = -1.0 * live[rows, g] / (len(g) * np.maximum(probs[rows, g], PROB_FLOOR))
    grads, grad_z = nn.backward(pred.params, acts, upstream)
    return loss, grads, grad_z


def _gaussian_nll(pred: Predictor, z, g, with_grad: bool = False):
    z, g = _check(pred, "continuous", z, g)
    acts = nn.forward(pred.params, z)
    mu, logvar, inside = _gaussian_head(acts[-1])
    inv_var = np.exp(-logvar)
    resid = g - mu
    loss = float(np.mean(logvar + resid**2 * inv_var))
    if not with_grad:
        return loss, None, None
    b = len(g)
    upstream = np.empty_like(acts[-1])
    upstream[:, 0] = -2.0 * resid * inv_var / b
    upstream[:, 1] = (1.0 - resid**2 * inv_var) * inside / b
    grads, grad_z = nn.backward(pred.params, acts, upstream)
    return loss, grads, grad_z


def predictor_loss_and_grads(pred: Predictor, z, g):
    """Likelihood loss for the predictor's mode with parameter and latent gradients."""
    if pred.mode == "discrete":
        return _discrete_nll(pred, z, g, with_grad=True)
    return _gaussian_nll(pred, z, g, with_grad=True)


def predictor_loss(pred: Predictor, z, g) -> float:
    return predictor_loss_and_grads(pred, z, g)[0]


def train_predictor_step(pred: Predictor, z, g, opt_state: nn.AdamState, lr: float):
    """One Adam step on the likelihood loss with `z` held constant.

    Returns `(new_predictor, new_state, loss_before_step)`.
    """
    loss, grads, _ = predictor_loss_and_grads(pred, np.asarray(z, dtype=np.float64).copy(), g)
    params, state = nn.adam_step(pred.params, grads, opt_state, lr)
    return Predictor(pred.mode, params, pred.n_groups), state, loss


# --- conditional log-likelihood and CLUB -----------------------------------------


def log_q_matrix(pred: Predictor, z, g) -> np.ndarray:
    """Entry [i, j] is log q(g_j | z_i).

    The continuous case drops the same additive constant as the likelihood
    loss: -log var(z_i) - (g_j - mu(z_i))^2 / var(z_i).
    """
    z, g = _check(pred, pred.mode, z, g)
    out = nn.predict(pred.params, z)
    if pred.mode == "discrete":
        return _log_prob_floor(out)[0][:, g]
    mu, logvar, _ = _gaussian_head(out)
    return -logvar[:, None] - (g[None, :] - mu[:, None]) ** 2 * np.exp(-logvar)[:, None]


def log_q(pred: Predictor, z_i, g_j) -> float:
    z_i = np.asarray(z_i, dtype=np.float64).reshape(1, -1)
    return float(log_q_matrix(pred, z_i, np.asarray([g_j]))[0, 0])


def club_loss(pred: Predictor, z, g) -> float:
    return club_loss_and_grad(pred, z, g, with_grad=False)[0]


def club_loss_and_grad(pred: Predictor, z, g, with_grad: bool = True):
    """Batch CLUB estimate and its gradient with respect to `z` only.

    Mean over i of [log q(g_i|z_i) - mean_j log q(g_j|z_i)] over all B^2
    pairs. Predictor parameters receive no gradient.
    """
    z, g = _check(pred, pred.mode, z, g)
    b = z.shape[0]
    if b < 2:
        raise ValueError("CLUB needs a batch of at least two samples")
    acts = nn.forward(pred.params, z)
    out = acts[-1]
    if pred.mode == "discrete":
        logp, live = _log_prob_floor(out)
        pairs = logp[:, g]
        value = float(np.mean(np.diag(pairs)) - np.mean(pairs))
        if not with_grad:
            return value, None
        counts = np.bincount(g, minlength=pred.n_groups)
        weight = -np.broadcast_to(counts / b, out.shape).copy()
        weight[np.arange(b), g] += 1.0
        upstream = weight * live / (b * np.maximum(out, PROB_FLOOR))
    else:
        mu, logvar, inside = _gaussian_head(out)
        inv_var = np.exp(-logvar)
        resid = g[None, :] - mu[:, None]
        pairs = -logvar[:, None] - resid**2 * inv_var[:, None]
        value = float(np.mean(np.diag(pairs)) - np.mean(pairs))
        if not with_grad:
            return value, None
        own = np.diag(resid)
        upstream = np.empty_like(out)
        upstream[:, 0] = 2.0 * inv_var * (own - resid.mean(axis=1)) / b
        upstream[:, 1] = inv_var * (own**2 - (resid**2).mean(axis=1)) * inside / b
    _, grad_z = nn.backward(pred.params, acts, upstream)
    return value, grad_z
