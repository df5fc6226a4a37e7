"""Command line entry point: ``fairclust {synth,train,eval,transfer} --config run.json``.

Each run is described by one JSON config file; relative paths inside it are
resolved against the config file's directory. The only other flag is
``--seed``, which overrides the config's seed.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import autoencoder as ae
from . import checkpoint, data, pipeline, transfer
from .errors import FormatError, ModeError, NumericalAbort, SchemaError
from .trainer import TrainConfig, train

log = logging.getLogger("fairclust")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int
    base: Path
    paths: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)
    transfer: dict = field(default_factory=dict)

    SECTIONS = ("seed", "paths", "synth", "train", "ablation", "transfer")

    @classmethod
    def load(cls, path, seed_override: int | None = None) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(raw) - set(cls.SECTIONS)
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        seed = raw.get("seed", 0) if seed_override is None else seed_override
        if not isinstance(seed, int):
            raise UsageError("seed must be an integer")
        return cls(
            seed,
            path.resolve().parent,
            dict(raw.get("paths", {})),
            dict(raw.get("synth", {})),
            dict(raw.get("train", {})),
            dict(raw.get("ablation", {})),
            dict(raw.get("transfer", {})),
        )

    def path(self, key: str, required: bool = True) -> Path | None:
        value = self.paths.get(key)
        if value is None:
            if required:
                raise UsageError(f"paths.{key} is required for this command")
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def output(self, key: str) -> Path:
        p = self.path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def train_config(self, sensitive_mode: str) -> TrainConfig:
        fields = dict(self.train)
        fields.pop("seed", None)
        fields.setdefault("sensitive_mode", sensitive_mode)
        if self.ablation.get("drop_cluster_loss"):
            fields["alpha"] = 0.0
        if self.ablation.get("drop_fairness_loss"):
            fields["beta"] = 0.0
        try:
            return TrainConfig.from_dict({**fields, "seed": self.seed})
        except (TypeError, ValueError) as exc:
            raise UsageError(f"train config: {exc}") from None


def _load_dataset(cfg: RunConfig, standardizer: dict | None = None):
    """Dataset per the schema file, standardized if the schema asks for it."""
    schema = data.load_schema(cfg.path("schema"))
    ds = data.load_csv(cfg.path("dataset"), schema)
    tf = None
    if schema.standardize:
        if standardizer is not None:
            tf = data.Standardizer.from_dict(standardizer)
            if tf.mean.shape != (ds.dim,):
                raise SchemaError("stored standardization does not match the dataset width")
            ds = data.Dataset(
                tf.apply(ds.features), ds.sensitive, ds.sensitive_mode, ds.labels, ds.name, ds.feature_names, ds.group_values
            )
        else:
            ds, tf = data.standardize(ds)
    return ds, tf


def _write_report(prefix: Path, text: str, doc: str) -> None:
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(str(prefix) + ".txt").write_text(text, encoding="utf-8")
    Path(str(prefix) + ".json").write_text(doc, encoding="utf-8")


def cmd_synth(cfg: RunConfig) -> None:
    s = dict(cfg.synth)
    try:
        k = int(s.get("K", 4))
        if k < 2:
            raise UsageError("synth.K must be at least 2")
        ds = data.synth_blobs(
            int(s.get("n_per_cluster", 100)),
            k,
            int(s.get("d", 16)),
            float(s.get("bias_strength", 0.5)),
            s.get("sensitive_mode", "discrete"),
            cfg.seed,
        )
    except ValueError as exc:
        raise UsageError(f"synth: {exc}") from None
    schema = data.write_csv(ds, cfg.output("dataset"))
    data.save_schema(schema, cfg.output("schema"))
    log.info("wrote %d rows to %s", ds.n, cfg.path("dataset"))


def cmd_train(cfg: RunConfig) -> None:
    ds, tf = _load_dataset(cfg)
    config = cfg.train_config(ds.sensitive_mode)
    report = train(ds, config)
    extra = {"standardizer": tf.to_dict() if tf else None, "dataset": report.dataset_fingerprint}
    checkpoint.save_checkpoint(report.models, config, cfg.output("checkpoint"), extra)
    lines = [
        f"epoch={r.epoch} phase={r.phase} total={r.total!r} recon={r.recon!r} cluster={r.cluster!r} "
        f"club={r.club!r} predictor={r.predictor!r} churn={r.churn!r}"
        for r in report.records
    ]
    _write_report(cfg.path("report"), "\n".join(lines) + "\n", report.to_json())
    emb = cfg.path("embeddings", required=False)
    if emb is not None:
        emb.parent.mkdir(parents=True, exist_ok=True)
        z = ae.encode(report.models.autoencoder, ds.features)
        pipeline.export_embeddings(emb, z, report.clusters.hard, ds.sensitive)


def cmd_eval(cfg: RunConfig) -> None:
    models, config, extra = checkpoint.load_checkpoint(cfg.path("checkpoint"))
    ds, _ = _load_dataset(cfg, extra.get("standardizer"))
    if ds.sensitive_mode != models.mode:
        raise ModeError(f"checkpoint is {models.mode}, dataset is {ds.sensitive_mode}")
    ev = pipeline.evaluate(models, config, ds, seed=cfg.seed)
    _write_report(cfg.path("report"), ev.report.to_text(), ev.report.to_json())
    emb = cfg.path("embeddings", required=False)
    if emb is not None:
        emb.parent.mkdir(parents=True, exist_ok=True)
        pipeline.export_embeddings(emb, ev.z, ev.clusters.hard, ds.sensitive)


def cmd_transfer(cfg: RunConfig) -> None:
    paths = cfg.paths.get("checkpoints") or [cfg.paths.get("checkpoint")]
    if not paths or paths[0] is None:
        raise UsageError("transfer needs paths.checkpoint or paths.checkpoints")
    encoders, standardizer = {}, None
    for p in paths:
        full = Path(p) if Path(p).is_absolute() else cfg.base / p
        models, _, extra = checkpoint.load_checkpoint(full)
        encoders[Path(p).stem] = models.autoencoder.encoder
        standardizer = standardizer or extra.get("standardizer")
    ds, _ = _load_dataset(cfg, standardizer)
    if ds.labels is None:
        raise SchemaError("transfer needs a label column in the dataset")
    t = cfg.transfer
    cmp = transfer.compare_encoders(
        encoders,
        ds,
        n_train=int(t.get("n_train", 128)),
        seed=cfg.seed,
        epochs=int(t.get("epochs", 200)),
        lr=float(t.get("lr", 1e-3)),
    )
    lines, doc = [], {"missing_train_classes": cmp.missing_train_classes, "encoders": {}}
    for name, res in cmp.results.items():
        for k, v in res.metrics().items():
            lines.append(f"{name}.{k}={100.0 * v:.1f}")
        doc["encoders"][name] = {k: v for k, v in res.metrics().items()}
    _write_report(cfg.path("report"), "\n".join(lines) + "\n", json.dumps(doc, indent=2, sort_keys=True) + "\n")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "transfer": cmd_transfer}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairclust", description="Fair deep clustering with continuous or discrete sensitive attributes.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FAIRCLUST_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.seed)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"fairclust: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, FormatError, ModeError, OSError) as exc:
        print(f"fairclust: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"fairclust: numerical abort at epoch {exc.epoch}, batch {exc.batch}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
