"""k-means centers, cosine soft assignments and the clustering loss."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .nn import softmax

log = logging.getLogger(__name__)

_LOG_FLOOR = 1e-300


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia_trace: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def inertia(self) -> float:
        return self.inertia_trace[-1]


@dataclass
class ClusterModel:
    centers: np.ndarray
    soft: np.ndarray
    hard: np.ndarray
    tau: float = 0.1

    def __post_init__(self):
        if self.centers.shape[0] < 2:
            raise ValueError("a cluster model needs K >= 2")
        if self.soft.shape[1] != self.centers.shape[0]:
            raise ShapeError("soft assignment width must equal the number of centers")

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]


def _sq_dists(z: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (z * z).sum(1)[:, None] - 2.0 * z @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(z, z[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(z, z[idx : idx + 1])[:, 0])
    return z[chosen].copy()


def kmeans_fit(z, k: int, seed: int | np.random.Generator = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd iterations from a k-means++ start until the assignment stops changing.

    A cluster that ends up empty is moved onto the point farthest from its
    current center.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError("k-means expects an N x d matrix")
    n = z.shape[0]
    if k < 1 or n < k:
        raise ValueError(f"need at least K={k} points, got {n}")
    if not np.all(np.isfinite(z)):
        raise ValueError("k-means input contains non-finite values")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    centers = _kmeans_pp(z, k, rng)
    labels = None
    trace = []
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(z, centers)
        new_labels = d.argmin(axis=1)
        trace.append(float(d[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        point_dist = d[np.arange(n), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = z[members].mean(axis=0)
            else:
                far = int(point_dist.argmax())
                centers[j] = z[far]
                labels[far] = j
                point_dist[far] = -1.0
    d = _sq_dists(z, centers)
    labels = d.argmin(axis=1)
    final = float(d[np.arange(n), labels].sum())
    if not trace or final != trace[-1]:
        trace.append(final)
    return KMeansResult(centers, labels, trace, it)


def cosine_matrix(z, centers, counter: Counter | None = None) -> np.ndarray:
    """Pairwise cosine similarity; pairs involving a zero vector get 0."""
    z = np.asarray(z, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if z.ndim != 2 or centers.ndim != 2 or z.shape[1] != centers.shape[1]:
        raise ShapeError(f"latent {z.shape} and centers {centers.shape} are incompatible")
    zn = np.linalg.norm(z, axis=1)
    un = np.linalg.norm(centers, axis=1)
    denom = np.outer(zn, un)
    degenerate = denom == 0.0
    cos = (z @ centers.T) / np.where(degenerate, 1.0, denom)
    cos[degenerate] = 0.0
    n_bad = int(degenerate.sum())
    if n_bad:
        log.warning("cosine undefined for %d latent/center pairs; using 0", n_bad)
        if counter is not None:
            counter["zero_norm_pairs"] += n_bad
    return cos


def soft_assign(z, centers, tau: float = 0.1, counter: Counter | None = None) -> np.ndarray:
    """Row-stochastic assignment: softmax over clusters of cos(z_i, U_k) / tau."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    return softmax(cosine_matrix(z, centers, counter) / tau)


def soft_assign_backward(z, centers, tau: float, soft: np.ndarray, grad_soft: np.ndarray) -> np.ndarray:
    """dLoss/dz given dLoss/dP; the centers are treated as constants."""
    z = np.asarray(z, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    grad_logits = soft * (grad_soft - np.sum(grad_soft * soft, axis=1, keepdims=True))
    grad_cos = grad_logits / tau

    zn = np.linalg.norm(z, axis=1)
    un = np.linalg.norm(centers, axis=1)
    # degenerate pairs were assigned a constant cosine, so they carry no gradient
    grad_cos = grad_cos * (un[None, :] > 0) * (zn[:, None] > 0)
    safe_zn = np.where(zn > 0, zn, 1.0)
    unit_u = centers / np.where(un > 0, un, 1.0)[:, None]
    cos = (z / safe_zn[:, None]) @ unit_u.T
    grad_z = (grad_cos @ unit_u) / safe_zn[:, None]
    grad_z -= (np.sum(grad_cos * cos, axis=1) / safe_zn**2)[:, None] * z
    return grad_z


def _xlogx(p: np.ndarray) -> np.ndarray:
    return np.where(p > 0, p * np.log(np.maximum(p, _LOG_FLOOR)), 0.0)


def cluster_loss(soft) -> float:
    """Negative mutual information between latent codes and soft cluster labels.

    Sum of p_k log p_k over the mean assignment, minus the mean row entropy
    term; 0 log 0 counts as 0.
    """
    p = np.asarray(soft, dtype=np.float64)
    marginal = p.mean(axis=0)
    return float(_xlogx(marginal).sum() - _xlogx(p).sum() / p.shape[0])


def cluster_loss_grad(soft) -> np.ndarray:
    p = np.asarray(soft, dtype=np.float64)
    n = p.shape[0]
    marginal = p.mean(axis=0)
    return (np.log(np.maximum(marginal, _LOG_FLOOR))[None, :] - np.log(np.maximum(p, _LOG_FLOOR))) / n


def hard_assign(soft) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest cluster index."""
    return np.asarray(soft).argmax(axis=1)


def build_cluster_model(z, k: int, tau: float, seed, max_iters: int = 100) -> ClusterModel:
    centers = kmeans_fit(z, k, seed, max_iters).centers
    p = soft_assign(z, centers, tau)
    return ClusterModel(centers, p, hard_assign(p), tau)
