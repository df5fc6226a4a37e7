"""Datasets: CSV ingestion, standardization, synthetic blobs and few-shot splits."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SchemaError

MODES = ("discrete", "continuous")


@dataclass
class Dataset:
    features: np.ndarray
    sensitive: np.ndarray
    sensitive_mode: str
    labels: np.ndarray | None = None
    name: str = "dataset"
    feature_names: list[str] = field(default_factory=list)
    group_values: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise SchemaError("features must be an N x d matrix")
        n = self.features.shape[0]
        if self.sensitive_mode not in MODES:
            raise SchemaError(f"unknown sensitive mode {self.sensitive_mode!r}")
        dtype = np.int64 if self.sensitive_mode == "discrete" else np.float64
        self.sensitive = np.asarray(self.sensitive, dtype=dtype)
        if self.sensitive.shape != (n,):
            raise SchemaError(f"sensitive attribute has shape {self.sensitive.shape}, expected ({n},)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise SchemaError("labels must have one entry per row")
        if not np.all(np.isfinite(self.features)):
            raise SchemaError("features contain non-finite values")
        if self.sensitive_mode == "continuous" and not np.all(np.isfinite(self.sensitive)):
            raise SchemaError("sensitive values contain non-finite entries")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]
        if self.sensitive_mode == "discrete" and not self.group_values:
            self.group_values = [str(v) for v in range(int(self.sensitive.max(initial=-1)) + 1)]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_groups(self) -> int | None:
        return len(self.group_values) if self.sensitive_mode == "discrete" else None

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(
            self,
            features=self.features[idx],
            sensitive=self.sensitive[idx],
            labels=None if self.labels is None else self.labels[idx],
        )

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.sensitive_mode.encode())
        h.update(json.dumps(self.feature_names).encode())
        for arr in (self.features, self.sensitive, self.labels):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


@dataclass
class SchemaConfig:
    feature_columns: list[str]
    sensitive_column: str
    sensitive_mode: str = "discrete"
    label_column: str | None = None
    delimiter: str = ","
    standardize: bool = True
    include_sensitive_in_features: bool = False

    def __post_init__(self):
        if self.sensitive_mode not in MODES:
            raise SchemaError(f"unknown sensitive mode {self.sensitive_mode!r}")
        if self.sensitive_column in self.feature_columns and not self.include_sensitive_in_features:
            raise SchemaError(
                f"sensitive column {self.sensitive_column!r} listed as a feature; "
                "set include_sensitive_in_features to allow it"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise SchemaError(f"unknown schema fields: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


def load_schema(path) -> SchemaConfig:
    try:
        return SchemaConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def save_schema(schema: SchemaConfig, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def _parse_real(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"row {row}: column {column!r} has unparsable value {text!r}") from None
    if not math.isfinite(value):
        raise SchemaError(f"row {row}: column {column!r} is not finite")
    return value


def _parse_int(text: str, row: int, column: str) -> int:
    value = _parse_real(text, row, column)
    if value != int(value):
        raise SchemaError(f"row {row}: column {column!r} must be an integer id, got {text!r}")
    return int(value)


def load_csv(path, schema: SchemaConfig, name: str | None = None) -> Dataset:
    """Read a headered CSV according to `schema`.

    Discrete group ids and labels are re-indexed to 0..T-1 in sorted order of
    the original values; the originals are kept in `group_values`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        wanted = list(schema.feature_columns) + [schema.sensitive_column]
        if schema.label_column:
            wanted.append(schema.label_column)
        for col in wanted:
            if col not in header:
                raise SchemaError(f"{path}: column {col!r} not found in header")
        pos = {h: i for i, h in enumerate(header)}

        feats, sens, labels, missing = [], [], [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header) or any(row[pos[c]].strip() == "" for c in wanted):
                missing.append(rowno)
                continue
            feats.append([_parse_real(row[pos[c]], rowno, c) for c in schema.feature_columns])
            s = row[pos[schema.sensitive_column]].strip()
            if schema.sensitive_mode == "discrete":
                sens.append(_parse_int(s, rowno, schema.sensitive_column))
            else:
                sens.append(_parse_real(s, rowno, schema.sensitive_column))
            if schema.label_column:
                labels.append(_parse_int(row[pos[schema.label_column]], rowno, schema.label_column))
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        raise SchemaError(f"{path}: rows with missing values: {shown}" + (" ..." if len(missing) > 10 else ""))
    if not feats:
        raise SchemaError(f"{path}: no data rows")

    features = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(schema.feature_columns))
    feature_names = list(schema.feature_columns)
    group_values: list[str] = []
    if schema.sensitive_mode == "discrete":
        raw = np.asarray(sens, dtype=np.int64)
        uniq, sensitive = np.unique(raw, return_inverse=True)
        if len(uniq) < 2:
            raise SchemaError(f"{path}: discrete sensitive column has fewer than 2 groups")
        group_values = [str(v) for v in uniq]
    else:
        sensitive = np.asarray(sens, dtype=np.float64)
    if schema.include_sensitive_in_features and schema.sensitive_column not in feature_names:
        features = np.column_stack([features, np.asarray(sens, dtype=np.float64)])
        feature_names.append(schema.sensitive_column)
    label_arr = None
    if schema.label_column:
        label_arr = np.unique(np.asarray(labels, dtype=np.int64), return_inverse=True)[1]
    return Dataset(
        features,
        sensitive,
        schema.sensitive_mode,
        label_arr,
        name or path.stem,
        feature_names,
        group_values,
    )


def write_csv(dataset: Dataset, path, delimiter: str = ",") -> SchemaConfig:
    """Write `dataset` with shortest round-trip float text; returns a matching schema.

    Discrete groups are written as their 0-based ids.
    """
    header = list(dataset.feature_names) + ["sensitive"]
    if dataset.labels is not None:
        header.append("label")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            s = dataset.sensitive[i]
            row.append(str(int(s)) if dataset.sensitive_mode == "discrete" else repr(float(s)))
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            writer.writerow(row)
    return SchemaConfig(
        feature_columns=list(dataset.feature_names),
        sensitive_column="sensitive",
        sensitive_mode=dataset.sensitive_mode,
        label_column="label" if dataset.labels is not None else None,
        delimiter=delimiter,
    )


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


def fit_standardizer(features) -> Standardizer:
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least two rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # constant columns are only centered
    return Standardizer(mean, np.where(std > 0, std, 1.0))


def standardize(dataset: Dataset) -> tuple[Dataset, Standardizer]:
    """Per-feature z-score with population statistics."""
    tf = fit_standardizer(dataset.features)
    return replace(dataset, features=tf.apply(dataset.features)), tf


def _blob_centers(k: int, d: int, min_dist: float, rng: np.random.Generator) -> np.ndarray:
    spread = min_dist * max(1.0, math.sqrt(k / d))
    for _ in range(1000):
        centers = rng.normal(0.0, spread, size=(k, d))
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        if dist[np.triu_indices(k, 1)].min() >= min_dist:
            return centers
        spread *= 1.05
    raise RuntimeError("could not place blob centers")  # pragma: no cover


def synth_blobs(
    n_per_cluster: int,
    k: int,
    d: int,
    bias_strength: float,
    sensitive_mode: str = "discrete",
    seed: int = 0,
    min_center_dist: float = 8.0,
) -> Dataset:
    """Gaussian blobs with a sensitive attribute tied to the cluster structure.

    Discrete: binary G with p(G=1 | cluster k) = 0.5 + bias * (-1)^k / 2, and
    the last coordinate shifted by 2 * bias for G=1 so G is readable from X.

    Continuous: G = bias * standardized(x_0) + (1 - bias) * noise, appended
    to the features as an extra column.
    """
    if k < 2 or d < 2:
        raise ValueError("synth_blobs needs K >= 2 and d >= 2")
    if not 0.0 <= bias_strength <= 1.0:
        raise ValueError("bias_strength must lie in [0, 1]")
    if sensitive_mode not in MODES:
        raise ValueError(f"unknown sensitive mode {sensitive_mode!r}")
    rng = np.random.default_rng(seed)
    centers = _blob_centers(k, d, min_center_dist, rng)
    labels = np.repeat(np.arange(k), n_per_cluster)
    x = centers[labels] + rng.normal(size=(labels.size, d))
    names = [f"x{i}" for i in range(d)]
    if sensitive_mode == "discrete":
        p1 = 0.5 + bias_strength * (-1.0) ** labels / 2.0
        g = (rng.random(labels.size) < p1).astype(np.int64)
        x[:, -1] += 2.0 * bias_strength * g
        ds = Dataset(x, g, "discrete", labels, f"blobs-k{k}-d{d}", names, ["0", "1"])
    else:
        x0 = (x[:, 0] - x[:, 0].mean()) / x[:, 0].std()
        g = bias_strength * x0 + (1.0 - bias_strength) * rng.normal(size=labels.size)
        x = np.column_stack([x, g])
        ds = Dataset(x, g, "continuous", labels, f"blobs-k{k}-d{d}", names + ["sensitive_feature"])
    return ds


@dataclass
class Split:
    train: Dataset
    test: Dataset
    train_idx: np.ndarray
    test_idx: np.ndarray
    missing_train_classes: list[int]


def split_fewshot(dataset: Dataset, n_train: int = 128, seed: int = 0) -> Split:
    """Uniform split without replacement; reports label classes absent from train."""
    if dataset.n <= n_train:
        raise ValueError(f"need more than {n_train} rows for a few-shot split, have {dataset.n}")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    missing: list[int] = []
    if dataset.labels is not None:
        missing = sorted(set(dataset.labels.tolist()) - set(dataset.labels[tr].tolist()))
    return Split(dataset.subset(tr), dataset.subset(te), tr, te, missing)


def one_hot(ids, n: int | None = None) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    n = int(ids.max()) + 1 if n is None else n
    out = np.zeros((ids.size, n))
    out[np.arange(ids.size), ids] = 1.0
    return out


def sensitive_matrix(values, mode: str, n_groups: int | None = None) -> np.ndarray:
    """Column form of a sensitive attribute: one-hot for groups, a single column otherwise."""
    if mode == "discrete":
        return one_hot(values, n_groups)
    return np.asarray(values, dtype=np.float64).reshape(-1, 1)

