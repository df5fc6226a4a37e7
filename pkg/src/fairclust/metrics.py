"""Clustering quality and fairness metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import fairness, nn
from .errors import ShapeError


@dataclass
class ContingencyTable:
    counts: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def contingency(a, b) -> ContingencyTable:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ShapeError("label vectors must have equal length")
    if a.size == 0:
        raise ValueError("empty input")
    ra, ia = np.unique(a, return_inverse=True)
    rb, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((len(ra), len(rb)), dtype=np.int64)
    np.add.at(counts, (ia, ib), 1)
    return ContingencyTable(counts, ra, rb)


def acc_from_table(counts) -> float:
    """Best one-to-one cluster/label matching on a co-occurrence table."""
    counts = np.asarray(counts)
    k = max(counts.shape)
    square = np.zeros((k, k), dtype=counts.dtype)
    square[: counts.shape[0], : counts.shape[1]] = counts
    rows, cols = linear_sum_assignment(square, maximize=True)
    return float(square[rows, cols].sum() / counts.sum())


def acc(pred_clusters, true_labels) -> float:
    return acc_from_table(contingency(pred_clusters, true_labels).counts)


def _entropy_from_counts(counts: np.ndarray) -> float:
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def mi_from_table(counts) -> float:
    """Plug-in mutual information (nats) of a contingency table."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    outer = np.outer(counts.sum(axis=1), counts.sum(axis=0))
    nz = counts > 0
    mi = float(np.sum(counts[nz] * np.log(n * counts[nz] / outer[nz])) / n)
    return max(mi, 0.0)


def nmi(a_labels, b_labels) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    t = contingency(a_labels, b_labels)
    ha = _entropy_from_counts(t.row_sums)
    hb = _entropy_from_counts(t.col_sums)
    if ha <= 0 or hb <= 0:
        return 0.0
    return float(min(mi_from_table(t.counts) / math.sqrt(ha * hb), 1.0))


def mi_plugin(clusters, groups) -> float:
    return mi_from_table(contingency(clusters, groups).counts)


def _cluster_group_counts(clusters, groups, n_clusters: int | None):
    clusters = np.asarray(clusters, dtype=np.int64).ravel()
    groups = np.asarray(groups).ravel()
    if clusters.shape != groups.shape:
        raise ShapeError("clusters and groups must have equal length")
    if clusters.size == 0:
        raise ValueError("empty input")
    _, gi = np.unique(groups, return_inverse=True)
    k = int(clusters.max()) + 1 if n_clusters is None else n_clusters
    counts = np.zeros((k, gi.max() + 1), dtype=np.int64)
    np.add.at(counts, (clusters, gi), 1)
    if n_clusters is None:
        counts = counts[counts.sum(axis=1) > 0]
    return counts


def balance(clusters, groups, n_clusters: int | None = None) -> float:
    """Smallest share of any group inside any cluster.

    With `n_clusters` given, an empty cluster contributes 0.
    """
    counts = _cluster_group_counts(clusters, groups, n_clusters)
    sizes = counts.sum(axis=1)
    if np.any(sizes == 0):
        return 0.0
    return float((counts / sizes[:, None]).min())


def mnce(clusters, groups, n_clusters: int | None = None) -> float | None:
    """Worst within-cluster group entropy relative to the global group entropy.

    None when only one group is present.
    """
    counts = _cluster_group_counts(clusters, groups, n_clusters)
    global_h = _entropy_from_counts(counts.sum(axis=0))
    if counts.shape[1] < 2 or global_h <= 0:
        return None
    within = [_entropy_from_counts(row) if row.sum() > 0 else 0.0 for row in counts]
    return float(min(min(within) / global_h, 1.0))


def f_measure(nmi_value: float, mnce_value: float, m: float = 1.0) -> float:
    denom = m * m * nmi_value + mnce_value
    if denom == 0:
        return 0.0
    return float((1 + m * m) * nmi_value * mnce_value / denom)


def gdp(predictions, groups, n_groups: int | None = None) -> float:
    """Largest gap in p(prediction = l | group) over labels l and group pairs."""
    predictions = np.asarray(predictions).ravel()
    groups = np.asarray(groups, dtype=np.int64).ravel()
    if predictions.shape != groups.shape:
        raise ShapeError("predictions and groups must have equal length")
    if predictions.size == 0:
        raise ValueError("empty input")
    t = int(groups.max()) + 1 if n_groups is None else n_groups
    _, pi = np.unique(predictions, return_inverse=True)
    counts = np.zeros((t, pi.max() + 1))
    np.add.at(counts, (groups, pi), 1)
    sizes = counts.sum(axis=1)
    if np.any(sizes == 0):
        raise ValueError(f"group(s) {np.flatnonzero(sizes == 0).tolist()} have no samples")
    rates = counts / sizes[:, None]
    return float((rates.max(axis=0) - rates.min(axis=0)).max())


def h_lemma1(v: float) -> float:
    """Lower-bound function relating variational distance to divergence."""
    if not 0.0 <= v < 2.0:
        raise ValueError("h is defined on [0, 2)")
    log_branch = math.log((2.0 + v) / (2.0 - v)) - 2.0 * v / (2.0 + v)
    poly_branch = v**2 / 2.0 + v**4 / 36.0 + v**6 / 288.0
    return max(log_branch, poly_branch)


@dataclass
class BoundReport:
    eta: float
    gdp: float
    lhs: float
    club_estimate: float
    flagged: bool


def bound_report(z, groups, predictions, predictor=None, seed: int = 0, steps: int = 300, lr: float = 1e-2) -> BoundReport:
    """Compare h(eta * GDP) against a CLUB estimate of I(Z;G).

    If no fitted discrete predictor is supplied one is trained on (z, groups).
    `flagged` marks cases where the left side exceeds the estimate; the
    estimate is approximate, so this is a diagnostic, not a failure.
    """
    groups = np.asarray(groups, dtype=np.int64).ravel()
    z = np.asarray(z, dtype=np.float64)
    n_groups = int(groups.max()) + 1
    eta = float(np.bincount(groups, minlength=n_groups).min() / groups.size)
    gap = gdp(predictions, groups, n_groups)
    lhs = h_lemma1(eta * gap)
    if predictor is None:
        predictor = fairness.build_predictor(z.shape[1], "discrete", n_groups, seed=seed)
        state = nn.AdamState.for_params(predictor.params)
        for _ in range(steps):
            predictor, state, _ = fairness.train_predictor_step(predictor, z, groups, state, lr)
    estimate = fairness.club_loss(predictor, z, groups)
    return BoundReport(eta, gap, lhs, estimate, lhs > estimate)


@dataclass
class MetricsReport:
    acc: float | None = None
    nmi: float | None = None
    bal: float | None = None
    mnce: float | None = None
    f_m: float | None = None
    gdp: float | None = None
    rho_star_cg: float | None = None
    rho_star_zg: float | None = None
    mi_cg_plugin: float | None = None
    bound: BoundReport | None = None
    extra: dict = field(default_factory=dict)

    def values(self) -> dict:
        """Scalar metrics that are present, in declaration order."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("bound", "extra") or v is None:
                continue
            out[f.name] = float(v)
        if self.bound is not None:
            out["bound_eta"] = self.bound.eta
            out["bound_lhs"] = self.bound.lhs
            out["bound_club"] = self.bound.club_estimate
        out.update({k: float(v) for k, v in self.extra.items()})
        return out

    def to_text(self) -> str:
        lines = [f"{k}={100.0 * v:.1f}" for k, v in self.values().items()]
        if self.bound is not None:
            lines.append(f"bound_flagged={int(self.bound.flagged)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        vals = self.values()
        doc = {
            "percent": {k: round(100.0 * v, 1) for k, v in vals.items()},
            "raw": vals,
        }
        if self.bound is not None:
            doc["bound"] = asdict(self.bound)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_text_report(text: str) -> dict[str, float]:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = float(v)
    return out
