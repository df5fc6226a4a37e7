"""End-to-end training loop for fair deep clustering.

Every epoch re-encodes the whole dataset and refits k-means centers. After
the warm-up epochs, each minibatch first updates the sensitive-attribute
predictor by maximum likelihood and then, with the predictor frozen, takes
one Adam step on the encoder/decoders for

    L = L_recon + alpha * L_cluster + beta * L_club.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import autoencoder as ae
from . import cluster, fairness, nn
from .data import Dataset
from .errors import ModeError, NumericalAbort
from .metrics import acc

log = logging.getLogger(__name__)

WARMUP_MODES = ("cluster_only", "reconstruction_only")


@dataclass
class TrainConfig:
    K: int = 4
    alpha: float = 0.04
    beta: float = 0.18
    tau: float = 0.1
    lr: float = 1e-4
    epochs: int = 300
    warmup_epochs: int = 20
    batch_size: int = 256
    seed: int = 0
    warmup_loss: str = "cluster_only"
    sensitive_mode: str = "discrete"
    latent_dim: int = 16
    hidden: tuple[int, ...] = (64, 32)
    predictor_hidden: tuple[int, ...] = (16, 16)
    groupwise_decoders: bool = True
    predictor_steps: int = 1
    predictor_lr: float | None = None
    kmeans_max_iters: int = 100

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.predictor_hidden = tuple(int(h) for h in self.predictor_hidden)
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("need 0 <= warmup_epochs <= epochs")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.tau <= 0 or self.lr < 0:
            raise ValueError("tau must be positive and lr non-negative")
        if self.warmup_loss not in WARMUP_MODES:
            raise ValueError(f"warmup_loss must be one of {WARMUP_MODES}")
        if self.sensitive_mode not in ("discrete", "continuous"):
            raise ValueError(f"unknown sensitive mode {self.sensitive_mode!r}")
        if self.predictor_steps < 1:
            raise ValueError("predictor_steps must be at least 1")

    @property
    def effective_predictor_lr(self) -> float:
        return self.lr if self.predictor_lr is None else self.predictor_lr

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["predictor_hidden"] = list(self.predictor_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown train config fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class FairClusterModels:
    autoencoder: ae.AutoencoderModel
    predictor: fairness.Predictor

    def copy(self) -> "FairClusterModels":
        return FairClusterModels(self.autoencoder.copy(), self.predictor.copy())

    @property
    def mode(self) -> str:
        return self.predictor.mode


def init_models(input_dim: int, config: TrainConfig, n_groups: int | None, seed) -> FairClusterModels:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    groupwise = config.sensitive_mode == "discrete" and config.groupwise_decoders
    model = ae.build_autoencoder(
        input_dim, config.latent_dim, config.hidden, n_groups if groupwise else None, rng
    )
    pred = fairness.build_predictor(
        config.latent_dim, config.sensitive_mode, n_groups, config.predictor_hidden, rng
    )
    return FairClusterModels(model, pred)


@dataclass
class LossComponents:
    total: float
    recon: float
    cluster: float
    club: float | None = None


@dataclass
class _StepGrads:
    encoder: nn.MlpParams
    decoders: list[nn.MlpParams]


def _loss_and_grads(
    models: FairClusterModels,
    x: np.ndarray,
    g: np.ndarray,
    centers: np.ndarray,
    tau: float,
    w_recon: float,
    w_cluster: float,
    w_club: float,
    eval_club: bool,
) -> tuple[LossComponents, _StepGrads]:
    model = models.autoencoder
    enc_acts = nn.forward(model.encoder, x)
    z = enc_acts[-1]
    group_ids = g if model.groupwise else None

    x_hat, dec_cache = ae.decode_forward(model, z, group_ids)
    l_r = ae.recon_loss(x, x_hat)
    dec_grads, grad_z = ae.decode_backward(model, dec_cache, w_recon * ae.recon_loss_grad(x, x_hat))

    soft = cluster.soft_assign(z, centers, tau)
    l_c = cluster.cluster_loss(soft)
    if w_cluster != 0.0:
        grad_z = grad_z + cluster.soft_assign_backward(
            z, centers, tau, soft, w_cluster * cluster.cluster_loss_grad(soft)
        )

    l_s = None
    if eval_club:
        l_s, grad_club = fairness.club_loss_and_grad(models.predictor, z, g, with_grad=w_club != 0.0)
        if w_club != 0.0:
            grad_z = grad_z + w_club * grad_club

    enc_grads, _ = nn.backward(model.encoder, enc_acts, grad_z)
    total = w_recon * l_r + w_cluster * l_c + (w_club * l_s if l_s is not None else 0.0)
    return LossComponents(total, l_r, l_c, l_s), _StepGrads(enc_grads, dec_grads)


def composite_loss(models: FairClusterModels, x, g, centers, config: TrainConfig) -> LossComponents:
    """L_recon + alpha * L_cluster + beta * L_club on one batch, predictor frozen."""
    return composite_loss_and_grads(models, x, g, centers, config)[0]


def composite_loss_and_grads(models: FairClusterModels, x, g, centers, config: TrainConfig):
    """Composite loss plus gradients for the encoder and every decoder."""
    x = np.asarray(x, dtype=np.float64)
    return _loss_and_grads(
        models, x, np.asarray(g), np.asarray(centers), config.tau, 1.0, config.alpha, config.beta, True
    )


def warmup_loss_and_grads(models: FairClusterModels, x, g, centers, config: TrainConfig):
    """Warm-up objective: L_cluster alone by default, or L_recon alone."""
    x = np.asarray(x, dtype=np.float64)
    if config.warmup_loss == "cluster_only":
        w_r, w_c = 0.0, 1.0
    else:
        w_r, w_c = 1.0, 0.0
    return _loss_and_grads(models, x, np.asarray(g), np.asarray(centers), config.tau, w_r, w_c, 0.0, False)


@dataclass
class OptimizerStates:
    encoder: nn.AdamState
    decoders: list[nn.AdamState]
    predictor: nn.AdamState

    @classmethod
    def fresh(cls, models: FairClusterModels) -> "OptimizerStates":
        return cls(
            nn.AdamState.for_params(models.autoencoder.encoder),
            [nn.AdamState.for_params(d) for d in models.autoencoder.decoders],
            nn.AdamState.for_params(models.predictor.params),
        )


def _apply_ae_step(models: FairClusterModels, grads: _StepGrads, states: OptimizerStates, lr: float, update_decoders: bool):
    model = models.autoencoder
    enc, states.encoder = nn.adam_step(model.encoder, grads.encoder, states.encoder, lr)
    decoders = list(model.decoders)
    if update_decoders:
        for t, (dec, dg) in enumerate(zip(model.decoders, grads.decoders)):
            decoders[t], states.decoders[t] = nn.adam_step(dec, dg, states.decoders[t], lr)
    models.autoencoder = ae.AutoencoderModel(enc, decoders, model.groupwise)


def warmup_step(models: FairClusterModels, states: OptimizerStates, x, g, centers, config: TrainConfig) -> float:
    """One optimizer step on the warm-up objective; returns the pre-step loss."""
    comps, grads = warmup_loss_and_grads(models, x, g, centers, config)
    _apply_ae_step(models, grads, states, config.lr, update_decoders=config.warmup_loss == "reconstruction_only")
    return comps.total


def joint_step(models: FairClusterModels, states: OptimizerStates, x, g, centers, config: TrainConfig):
    """Predictor update(s), then an encoder/decoder step with the predictor frozen.

    Returns `(components, predictor_loss)`, both measured before the encoder step.
    """
    z = ae.encode(models.autoencoder, x)
    pred_loss = None
    for _ in range(config.predictor_steps):
        models.predictor, states.predictor, loss = fairness.train_predictor_step(
            models.predictor, z, g, states.predictor, config.effective_predictor_lr
        )
        if pred_loss is None:
            pred_loss = loss
    comps, grads = composite_loss_and_grads(models, x, g, centers, config)
    _apply_ae_step(models, grads, states, config.lr, update_decoders=True)
    return comps, pred_loss


@dataclass
class EpochRecord:
    epoch: int
    phase: str
    recon: float
    cluster: float
    total: float
    club: float | None = None
    predictor: float | None = None
    churn: float | None = None


@dataclass
class TrainReport:
    config: TrainConfig
    records: list[EpochRecord]
    models: FairClusterModels
    clusters: cluster.ClusterModel
    dataset_fingerprint: str = ""
    degenerate_cosines: int = 0

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "dataset": self.dataset_fingerprint,
            "epochs": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _batches(perm: np.ndarray, batch_size: int) -> list[np.ndarray]:
    out = [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        tail = out.pop()
        out[-1] = np.concatenate([out[-1], tail])
    return out


def _check_finite(values: dict, epoch: int, batch: int):
    for name, v in values.items():
        if v is not None and not math.isfinite(v):
            raise NumericalAbort(f"non-finite {name} at epoch {epoch}, batch {batch}", epoch, batch, values)


def final_clustering(models: FairClusterModels, features, config: TrainConfig) -> cluster.ClusterModel:
    """Encode everything, fit k-means with a seed-derived stream, assign by soft argmax."""
    z = ae.encode(models.autoencoder, features)
    rng = np.random.default_rng([config.seed, 0xC1])
    return cluster.build_cluster_model(z, config.K, config.tau, rng, config.kmeans_max_iters)


def train(
    dataset: Dataset,
    config: TrainConfig,
    models: FairClusterModels | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainReport:
    if dataset.n < 2:
        raise ValueError("training needs at least two samples")
    if dataset.sensitive_mode != config.sensitive_mode:
        raise ModeError(f"config expects {config.sensitive_mode} sensitive data, dataset is {dataset.sensitive_mode}")
    if dataset.n < config.K:
        raise ValueError("fewer samples than clusters")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng, shuffle_rng, kmeans_rng = (np.random.default_rng(s) for s in seeds)
    if models is None:
        models = init_models(dataset.dim, config, dataset.n_groups, init_rng)
    else:
        models = models.copy()
    states = OptimizerStates.fresh(models)
    x_all = dataset.features
    g_all = dataset.sensitive

    records = []
    prev_labels = None
    for epoch in range(config.epochs):
        z_all = ae.encode(models.autoencoder, x_all)
        if not np.all(np.isfinite(z_all)):
            raise NumericalAbort(f"non-finite representations at epoch {epoch}", epoch, None)
        km = cluster.kmeans_fit(z_all, config.K, kmeans_rng, config.kmeans_max_iters)
        churn = None if prev_labels is None else 1.0 - acc(km.labels, prev_labels)
        prev_labels = km.labels

        warm = epoch < config.warmup_epochs
        sums = {"recon": 0.0, "cluster": 0.0, "total": 0.0, "club": 0.0, "predictor": 0.0}
        weight = 0
        for b, idx in enumerate(_batches(shuffle_rng.permutation(dataset.n), config.batch_size)):
            x, g = x_all[idx], g_all[idx]
            try:
                if warm:
                    comps, grads = warmup_loss_and_grads(models, x, g, km.centers, config)
                    values = {"recon": comps.recon, "cluster": comps.cluster, "total": comps.total}
                    _check_finite(values, epoch, b)
                    _apply_ae_step(
                        models, grads, states, config.lr, update_decoders=config.warmup_loss == "reconstruction_only"
                    )
                else:
                    comps, pred_loss = joint_step(models, states, x, g, km.centers, config)
                    values = {
                        "recon": comps.recon,
                        "cluster": comps.cluster,
                        "total": comps.total,
                        "club": comps.club,
                        "predictor": pred_loss,
                    }
                    _check_finite(values, epoch, b)
            except NumericalAbort as exc:
                if exc.epoch is None:
                    exc.epoch, exc.batch = epoch, b
                log.error("training aborted at epoch %d batch %d: %s", epoch, b, exc)
                raise
            for k, v in values.items():
                sums[k] += v * len(idx)
            weight += len(idx)

        rec = EpochRecord(
            epoch=epoch,
            phase="warmup" if warm else "joint",
            recon=sums["recon"] / weight,
            cluster=sums["cluster"] / weight,
            total=sums["total"] / weight,
            club=None if warm else sums["club"] / weight,
            predictor=None if warm else sums["predictor"] / weight,
            churn=churn,
        )
        records.append(rec)
        log.info(
            "epoch %d [%s] total=%.4f recon=%.4f cluster=%.4f club=%s",
            epoch, rec.phase, rec.total, rec.recon, rec.cluster,
            "-" if rec.club is None else f"{rec.club:.4f}",
        )
        if on_epoch is not None:
            on_epoch(rec)

    clusters = final_clustering(models, x_all, config)
    return TrainReport(config, records, models, clusters, dataset.fingerprint())
