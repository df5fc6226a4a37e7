"""Few-shot classification on top of a frozen encoder.

The classifier only ever sees encoder outputs, so its predictions are a
function of the representation alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .data import Dataset, one_hot, split_fewshot
from .metrics import gdp
from .maxcorr import rho_star_neural


def params_digest(params: nn.MlpParams) -> str:
    h = hashlib.sha256()
    for a in params.arrays():
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


@dataclass
class Classifier:
    params: nn.MlpParams
    n_classes: int


@dataclass
class TransferResult:
    accuracy: float
    mode: str
    gdp: float | None = None
    rho_star: float | None = None
    encoder: str = ""

    @property
    def fairness(self) -> float:
        return self.gdp if self.mode == "discrete" else self.rho_star

    def metrics(self) -> dict:
        out = {"transfer_acc": self.accuracy}
        if self.gdp is not None:
            out["transfer_gdp"] = self.gdp
        if self.rho_star is not None:
            out["transfer_rho_star"] = self.rho_star
        return out


def train_fewshot(
    encoder: nn.MlpParams,
    train: Dataset,
    seed: int = 0,
    hidden: Sequence[int] = (16, 16),
    epochs: int = 200,
    lr: float = 1e-3,
) -> Classifier:
    """Full-batch Adam on cross-entropy over frozen representations."""
    if train.labels is None:
        raise ValueError("few-shot training needs labelled data")
    if train.dim != encoder.d_in:
        raise ValueError(f"encoder expects {encoder.d_in} features, dataset has {train.dim}")
    z = nn.predict(encoder, train.features)
    n_classes = int(train.labels.max()) + 1
    target = one_hot(train.labels, n_classes)
    params = nn.init_params(nn.MlpSpec.build(z.shape[1], hidden, n_classes, output="softmax"), seed)
    state = nn.AdamState.for_params(params)
    b = z.shape[0]
    for _ in range(epochs):
        acts = nn.forward(params, z)
        probs = np.maximum(acts[-1], 1e-12)
        grads, _ = nn.backward(params, acts, -target / (b * probs))
        params, state = nn.adam_step(params, grads, state, lr)
    return Classifier(params, n_classes)


def classify(classifier: Classifier, encoder: nn.MlpParams, features) -> np.ndarray:
    return nn.predict(classifier.params, nn.predict(encoder, features)).argmax(axis=1)


def eval_transfer(classifier: Classifier, encoder: nn.MlpParams, test: Dataset, seed: int = 0, name: str = "") -> TransferResult:
    if test.n == 0:
        raise ValueError("empty test split")
    if test.labels is None:
        raise ValueError("evaluation needs labelled data")
    pred = classify(classifier, encoder, test.features)
    accuracy = float(np.mean(pred == test.labels))
    if test.sensitive_mode == "discrete":
        return TransferResult(accuracy, "discrete", gdp=gdp(pred, test.sensitive, test.n_groups), encoder=name)
    rho = rho_star_neural(one_hot(pred, classifier.n_classes), test.sensitive, seed=seed)
    return TransferResult(accuracy, "continuous", rho_star=rho, encoder=name)


@dataclass
class TransferComparison:
    results: dict[str, TransferResult] = field(default_factory=dict)
    missing_train_classes: list[int] = field(default_factory=list)


def compare_encoders(
    encoders: dict[str, nn.MlpParams],
    dataset: Dataset,
    n_train: int = 128,
    seed: int = 0,
    epochs: int = 200,
    lr: float = 1e-3,
) -> TransferComparison:
    """Same split and classifier seed for every encoder; results keyed by encoder name."""
    split = split_fewshot(dataset, n_train, seed)
    out = TransferComparison(missing_train_classes=split.missing_train_classes)
    for name, enc in encoders.items():
        clf = train_fewshot(enc, split.train, seed=seed, epochs=epochs, lr=lr)
        out.results[name] = eval_transfer(clf, enc, split.test, seed=seed, name=name)
    return out
