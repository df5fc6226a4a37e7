"""Renyi maximal correlation estimators.

`rho_star_neural` fits two small networks a(x), b(g) to maximise the Pearson
correlation of their outputs. `rho_star_ace_oracle` is an independent check
for scalar pairs: alternating conditional expectations over quantile bins.
"""

from __future__ import annotations

import numpy as np

from . import nn


def _as_matrix(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v.reshape(-1, 1) if v.ndim == 1 else v


def _standardize_columns(x: np.ndarray) -> np.ndarray:
    std = x.std(axis=0)
    keep = std > 1e-12
    return (x[:, keep] - x[:, keep].mean(axis=0)) / std[keep]


def pearson_and_grads(a: np.ndarray, b: np.ndarray):
    """Pearson r of two vectors and dr/da, dr/db. Constant inputs give r = 0."""
    ac = a - a.mean()
    bc = b - b.mean()
    sa = float(ac @ ac)
    sb = float(bc @ bc)
    if sa <= 1e-300 or sb <= 1e-300:
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    denom = np.sqrt(sa * sb)
    r = float(ac @ bc) / denom
    return r, bc / denom - r * ac / sa, ac / denom - r * bc / sb


def rho_star_neural(
    x,
    g,
    seed: int = 0,
    hidden: tuple[int, ...] = (16, 16),
    steps: int = 300,
    lr: float = 1e-2,
) -> float:
    """Maximal correlation estimate from two jointly trained MLPs.

    The networks are fitted on a random half of the rows; the reported value
    is the best correlation reached on the other half, clamped to [0, 1].
    Discrete variables should be passed one-hot encoded.
    """
    xm = _standardize_columns(_as_matrix(x))
    gm = _standardize_columns(_as_matrix(g))
    if xm.shape[0] != gm.shape[0]:
        raise ValueError("x and g must have the same number of rows")
    if xm.shape[1] == 0 or gm.shape[1] == 0:
        return 0.0
    if xm.shape[0] < 30:
        raise ValueError("rho_star_neural needs at least 30 samples")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(xm.shape[0])
    fit, held = perm[: xm.shape[0] // 2], perm[xm.shape[0] // 2 :]
    net_a = nn.init_params(nn.MlpSpec.build(xm.shape[1], hidden, 1), rng)
    net_b = nn.init_params(nn.MlpSpec.build(gm.shape[1], hidden, 1), rng)
    opt_a, opt_b = nn.AdamState.for_params(net_a), nn.AdamState.for_params(net_b)
    best = 0.0
    for _ in range(steps):
        acts_a = nn.forward(net_a, xm[fit])
        acts_b = nn.forward(net_b, gm[fit])
        _, da, db = pearson_and_grads(acts_a[-1][:, 0], acts_b[-1][:, 0])
        grad_a, _ = nn.backward(net_a, acts_a, -da[:, None])
        grad_b, _ = nn.backward(net_b, acts_b, -db[:, None])
        net_a, opt_a = nn.adam_step(net_a, grad_a, opt_a, lr)
        net_b, opt_b = nn.adam_step(net_b, grad_b, opt_b, lr)
        r, _, _ = pearson_and_grads(nn.predict(net_a, xm[held])[:, 0], nn.predict(net_b, gm[held])[:, 0])
        best = max(best, r)
    return float(np.clip(best, 0.0, 1.0))


def _discretize(v: np.ndarray, bins: int) -> tuple[np.ndarray, int, bool]:
    """Bin ids, bin count, and whether bins are ordered quantiles.

    Variables with at most `bins` distinct values keep one bin per value.
    """
    uniq, inverse = np.unique(v, return_inverse=True)
    if len(uniq) <= bins:
        return inverse, len(uniq), False
    ranks = np.argsort(np.argsort(v, kind="stable"), kind="stable")
    return (ranks * bins) // len(v), bins, True


def _smooth(values: np.ndarray, weights: np.ndarray, span: int) -> np.ndarray:
    if span <= 0:
        return values
    out = np.empty_like(values)
    for i in range(len(values)):
        lo, hi = max(0, i - span), min(len(values), i + span + 1)
        w = weights[lo:hi]
        out[i] = np.sum(values[lo:hi] * w) / np.sum(w)
    return out


def _normalize(f: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    f = f - np.sum(f * w)
    var = np.sum(f * f * w)
    if var <= 1e-24:
        return None
    return f / np.sqrt(var)


def rho_star_ace_oracle(x, g, bins: int = 16, smooth_span: int = 3, max_iter: int = 1000, tol: float = 1e-12) -> float:
    """Maximal correlation of a scalar pair by alternating conditional expectations.

    Both variables are cut into quantile bins; each conditional-expectation
    step is followed by a running mean over `smooth_span` neighbouring bins
    on either side (ordered bins only).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    if x.shape != g.shape:
        raise ValueError("x and g must have the same length")
    n = x.size
    bins = max(2, min(bins, n // 2))
    xi, bx, ordered_x = _discretize(x, bins)
    gi, bg, ordered_g = _discretize(g, bins)
    if bx < 2 or bg < 2:
        return 0.0
    joint = np.zeros((bx, bg))
    np.add.at(joint, (xi, gi), 1.0)
    joint /= n
    px, pg = joint.sum(axis=1), joint.sum(axis=0)
    span_x = smooth_span if ordered_x else 0
    span_g = smooth_span if ordered_g else 0

    gf = _normalize(np.arange(bg, dtype=np.float64), pg)
    r_prev = None
    r = 0.0
    for _ in range(max_iter):
        f = _normalize(_smooth(joint @ gf / px, px, span_x), px)
        if f is None:
            return 0.0
        gf = _normalize(_smooth(joint.T @ f / pg, pg, span_g), pg)
        if gf is None:
            return 0.0
        r = float(f @ joint @ gf)
        if r_prev is not None and abs(r - r_prev) < tol:
            break
        r_prev = r
    return float(min(abs(r), 1.0))
