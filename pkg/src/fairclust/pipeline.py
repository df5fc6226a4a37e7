"""Glue shared by the CLI and the experiment tests: evaluation and exports."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import metrics
from .cluster import ClusterModel
from .data import Dataset, one_hot, sensitive_matrix
from .maxcorr import rho_star_neural
from .trainer import FairClusterModels, TrainConfig, final_clustering


@dataclass
class Evaluation:
    report: metrics.MetricsReport
    clusters: ClusterModel
    z: np.ndarray


def evaluate(models: FairClusterModels, config: TrainConfig, dataset: Dataset, seed: int | None = None) -> Evaluation:
    """Cluster the dataset with the trained encoder and compute every applicable metric."""
    seed = config.seed if seed is None else seed
    z = ae.encode(models.autoencoder, dataset.features)
    clusters = final_clustering(models, dataset.features, config)
    c = clusters.hard
    rep = metrics.MetricsReport()
    if dataset.labels is not None:
        rep.acc = metrics.acc(c, dataset.labels)
        rep.nmi = metrics.nmi(c, dataset.labels)
    g_cols = sensitive_matrix(dataset.sensitive, dataset.sensitive_mode, dataset.n_groups)
    rep.rho_star_cg = rho_star_neural(one_hot(c, config.K), g_cols, seed=seed)
    rep.rho_star_zg = rho_star_neural(z, g_cols, seed=seed)
    if dataset.sensitive_mode == "discrete":
        g = dataset.sensitive
        rep.bal = metrics.balance(c, g, config.K)
        rep.mnce = metrics.mnce(c, g, config.K)
        if rep.nmi is not None and rep.mnce is not None:
            rep.f_m = metrics.f_measure(rep.nmi, rep.mnce)
        rep.gdp = metrics.gdp(c, g, dataset.n_groups)
        rep.mi_cg_plugin = metrics.mi_plugin(c, g)
        rep.bound = metrics.bound_report(z, g, c, predictor=models.predictor)
    return Evaluation(rep, clusters, z)


def export_embeddings(path, z: np.ndarray, clusters: np.ndarray, sensitive: np.ndarray) -> None:
    """CSV with header id,z_0..z_{d-1},cluster,sensitive."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"z_{j}" for j in range(z.shape[1])] + ["cluster", "sensitive"])
        discrete = np.issubdtype(np.asarray(sensitive).dtype, np.integer)
        for i in range(z.shape[0]):
            s = str(int(sensitive[i])) if discrete else repr(float(sensitive[i]))
            w.writerow([i] + [repr(float(v)) for v in z[i]] + [int(clusters[i]), s])
