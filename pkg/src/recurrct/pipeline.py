"""File-based pipeline stages, classification metrics and the report table.

Every stage reads its inputs from, and writes its outputs to, the configured
output directory::

    cohort/            synthetic cohort (manifest.json, atlas.json, subjects/)
    split.json         stratified train/test subject ids
    plots/             <subject>/roi_<id>.pgm and index.json
    ae/                <network>.rcnn autoencoder weights, <network>_loss.csv
    embeddings/        <network>.csv
    clf/               <network>.rcnn classifier weights, <network>_loss.csv
    reports/           <network>.json and table.txt
    rqa/               <network>.csv
    audit/             subject ids seen by each training stage

Re-running a stage with unchanged inputs rewrites byte-identical files.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import models
from .data import (Dataset, Label, NetworkSpec, default_atlas, generate_synthetic_cohort,
                   load_dataset, reduced_atlas, split_train_test, write_dataset, zscore_normalize)
from .embedding import (DEFAULT_DMAX, DEFAULT_MAXLAG, EmbeddingParams, delay_embed, estimate_params,
                        select_lag)
from .errors import StageError, ValidationError
from .recurrence import (DEFAULT_TARGET, DEFAULT_TARGET_RR, binarize, compute_rqa, distance_matrix,
                         read_pgm, series_plot, write_pgm, write_rqa_csv)

log = logging.getLogger(__name__)

STAGES = ("synth", "plots", "train-ae", "embed", "train-clf", "eval", "rqa")
REPORT_SCHEMA = 1
INDEX_SCHEMA = 1


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class ClassificationReport:
    network: str
    confusion: tuple[tuple[int, int], tuple[int, int]]
    accuracy: float
    precision: float | None
    recall: float | None

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)

    def to_json(self) -> dict:
        return {"schema": REPORT_SCHEMA, "network": self.network,
                "confusion": [list(r) for r in self.confusion],
                "accuracy": self.accuracy, "precision": self.precision, "recall": self.recall}


def compute_metrics(confusion, network: str = "") -> ClassificationReport:
    """Accuracy, precision and recall from ``[[TN, FP], [FN, TP]]``.

    Rows are the true class (Healthy, MCI), columns the prediction; MCI is the
    positive class. Undefined ratios come back as None.
    """
    arr = np.asarray(confusion)
    if arr.shape != (2, 2) or not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError("confusion must be a 2x2 integer matrix")
    if (arr < 0).any():
        raise ValidationError("confusion entries must be non-negative")
    (tn, fp), (fn, tp) = arr.tolist()
    total = tn + fp + fn + tp
    if total == 0:
        raise ValidationError("confusion matrix is empty")
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return ClassificationReport(network, ((tn, fp), (fn, tp)), (tp + tn) / total, precision, recall)


def _ratio_text(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.2f}"


def render_report(reports: Sequence[ClassificationReport]) -> str:
    """Plain-text table (Network, Accuracy, Precision, Recall), best accuracy first,
    followed by the mean accuracy line."""
    if not reports:
        raise ValidationError("render_report needs at least one report")
    rows = sorted(reports, key=lambda r: (-r.accuracy, r.network))
    width = max(len("Network"), *(len(r.network) for r in rows))
    lines = [f"{'Network':<{width}}  {'Accuracy':>8}  {'Precision':>9}  {'Recall':>6}"]
    for r in rows:
        lines.append(f"{r.network:<{width}}  {100 * r.accuracy:>7.2f}%  "
                     f"{_ratio_text(r.precision):>9}  {_ratio_text(r.recall):>6}")
    mean = 100 * sum(r.accuracy for r in rows) / len(rows)
    lines.append(f"Mean accuracy: {mean:.2f}%")
    return "\n".join(lines) + "\n"


def report_from_json(obj: dict) -> ClassificationReport:
    if obj.get("schema") != REPORT_SCHEMA:
        raise ValidationError(f"unsupported report schema {obj.get('schema')!r}")
    c = obj["confusion"]
    return ClassificationReport(obj["network"], (tuple(c[0]), tuple(c[1])), obj["accuracy"],
                                obj["precision"], obj["recall"])


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class SyntheticSpec:
    n_per_class: int = 50
    series_len: int = 200
    rois_per_network: int | None = 2
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    manifest: Path | None = None
    synthetic: SyntheticSpec | None = None
    networks: tuple[str, ...] | None = None
    tau: int | None = None
    dim: int | None = None
    d_max: int = DEFAULT_DMAX
    max_lag: int = DEFAULT_MAXLAG
    target_size: int = DEFAULT_TARGET
    target_rr: float = DEFAULT_TARGET_RR
    train: models.TrainConfig = field(default_factory=models.TrainConfig)

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ValidationError("config needs exactly one of dataset.manifest or dataset.synthetic")
        if self.manifest is not None and not Path(self.manifest).is_file():
            raise FileNotFoundError(f"dataset manifest not found: {self.manifest}")
        if self.tau is not None and self.tau < 1:
            raise ValidationError("tau must be >= 1")
        if self.dim is not None and self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.d_max < 2 or self.max_lag < 1:
            raise ValidationError("d_max must be >= 2 and max_lag >= 1")
        if self.target_size < 2:
            raise ValidationError("target_size must be >= 2")
        if not 0.0 < self.target_rr < 1.0:
            raise ValidationError("target_rr must lie in (0, 1)")

    @classmethod
    def from_dict(cls, obj: dict, base: Path = Path(".")) -> "PipelineConfig":
        """Build from the JSON layout; relative paths resolve against ``base``."""
        known = {"out_dir", "dataset", "networks", "embedding", "recurrence", "train"}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "out_dir" not in obj or "dataset" not in obj:
            raise ValidationError("config needs 'out_dir' and 'dataset'")
        ds = obj["dataset"]
        emb = obj.get("embedding", {})
        rec = obj.get("recurrence", {})
        nets = obj.get("networks")
        try:
            manifest = base / ds["manifest"] if "manifest" in ds else None
            synthetic = SyntheticSpec(**ds["synthetic"]) if "synthetic" in ds else None
            return cls(out_dir=base / obj["out_dir"], manifest=manifest, synthetic=synthetic,
                       networks=tuple(nets) if nets else None,
                       tau=emb.get("tau"), dim=emb.get("dim"),
                       d_max=emb.get("d_max", DEFAULT_DMAX), max_lag=emb.get("max_lag", DEFAULT_MAXLAG),
                       target_size=rec.get("target_size", DEFAULT_TARGET),
                       target_rr=rec.get("target_rr", DEFAULT_TARGET_RR),
                       train=models.TrainConfig(**obj.get("train", {})))
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(obj, path.parent)

    def with_overrides(self, *, network=None, seed=None, epochs=None, tau=None, dim=None,
                       d_max=None, max_lag=None, target_rr=None, out_dir=None) -> "PipelineConfig":
        changes: dict = {}
        if network is not None:
            changes["networks"] = (network,)
        if seed is not None or epochs is not None:
            t = self.train
            changes["train"] = replace(t, seed=t.seed if seed is None else seed,
                                       epochs=t.epochs if epochs is None else epochs)
            if seed is not None and self.synthetic is not None:
                changes["synthetic"] = replace(self.synthetic, seed=seed)
        for key, val in (("tau", tau), ("dim", dim), ("d_max", d_max), ("max_lag", max_lag),
                         ("target_rr", target_rr), ("out_dir", out_dir)):
            if val is not None:
                changes[key] = Path(val) if key == "out_dir" else val
        return replace(self, **changes)


# ---------------------------------------------------------------- helpers

def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read_json(path: Path, stage_hint: str):
    if not path.is_file():
        raise StageError(f"{stage_hint} not found at {path}")
    return json.loads(path.read_text())


def _write_loss_csv(path: Path, history: Iterable[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for k, v in enumerate(history, 1):
            w.writerow([k, repr(float(v))])


def embedding_columns() -> list[str]:
    n = models.LATENT_SIZE
    return [f"e_{r}_{c}" for r in range(n) for c in range(n)]


class Pipeline:
    """Stage runner bound to one config; datasets and splits are loaded lazily."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self._dataset: Dataset | None = None

    # -------------------------------------------------------- shared inputs

    @property
    def cohort_manifest(self) -> Path:
        return Path(self.cfg.manifest) if self.cfg.manifest is not None else self.out / "cohort" / "manifest.json"

    def dataset(self) -> Dataset:
        if self._dataset is None:
            if not self.cohort_manifest.is_file():
                raise StageError(f"cohort not found at {self.cohort_manifest} (run synth)")
            self._dataset = load_dataset(self.cohort_manifest)
        return self._dataset

    def networks(self) -> list[NetworkSpec]:
        atlas = self.dataset().atlas
        names = self.cfg.networks or tuple(n.name for n in atlas.networks)
        return [atlas.network(name) for name in names]

    def split(self) -> tuple[list[str], list[str]]:
        """Train and test subject ids (sorted); also written to split.json."""
        t = self.cfg.train
        train, test = split_train_test(self.dataset(), t.test_fraction, t.seed)
        ids = (sorted(s.subject_id for s in train.subjects), sorted(s.subject_id for s in test.subjects))
        _write_json(self.out / "split.json", {"seed": t.seed, "test_fraction": t.test_fraction,
                                             "train": ids[0], "test": ids[1]})
        return ids

    def _audit(self, stage: str, network: NetworkSpec, subject_ids: Sequence[str]) -> None:
        _write_json(self.out / "audit" / f"{stage}__{network.slug}.json",
                    {"stage": stage, "network": network.name, "subjects": sorted(subject_ids)})

    def embedding_params(self, values: np.ndarray) -> EmbeddingParams:
        cfg = self.cfg
        n = values.size
        if cfg.tau is not None and cfg.dim is not None:
            return EmbeddingParams.for_length(n, cfg.dim, cfg.tau)
        if cfg.dim is not None:
            tau = select_lag(values, max(1, min(cfg.max_lag, math.ceil(n / 2) - 1)))
            return EmbeddingParams.for_length(n, cfg.dim, tau)
        return estimate_params(values, cfg.d_max, cfg.max_lag, cfg.tau)

    def _roi_jobs(self):
        """(subject, network, roi_id, z-scored values) in subject, network, roi order."""
        for subject in sorted(self.dataset().subjects, key=lambda s: s.subject_id):
            for net in self.networks():
                for rid in net.roi_ids:
                    yield subject, net, rid, zscore_normalize(subject.series[rid]).values

    def plot_path(self, subject_id: str, roi_id: int) -> Path:
        return self.out / "plots" / subject_id / f"roi_{roi_id}.pgm"

    def _plot_index(self) -> dict:
        return _read_json(self.out / "plots" / "index.json", "recurrence plots (run plots)")

    def _network_images(self, network: NetworkSpec, subject_ids: Sequence[str]) -> list[np.ndarray]:
        index = self._plot_index()
        have = {(e["subject_id"], e["roi_id"]) for e in index["entries"]}
        images = []
        for sid in subject_ids:
            missing = [r for r in network.roi_ids if (sid, r) not in have]
            if missing:
                raise StageError(f"recurrence plots not found for {sid} rois {missing} (run plots)")
            images.append(np.stack([read_pgm(self.plot_path(sid, r)) for r in network.roi_ids]))
        return images

    def _embeddings(self, network: NetworkSpec) -> dict[str, np.ndarray]:
        path = self.out / "embeddings" / f"{network.slug}.csv"
        if not path.is_file():
            raise StageError(f"embeddings not found at {path} (run embed)")
        out = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = embedding_columns()
            for row in reader:
                out[row["subject_id"]] = np.array([float(row[c]) for c in cols]).reshape(
                    models.LATENT_SIZE, models.LATENT_SIZE)
        return out

    def _labels(self) -> dict[str, Label]:
        return {s.subject_id: s.label for s in self.dataset().subjects}

    # --------------------------------------------------------------- stages

    def synth(self) -> Path:
        spec = self.cfg.synthetic
        if spec is None:
            raise ValidationError("config names a dataset manifest; there is nothing to synthesize")
        atlas = reduced_atlas(spec.rois_per_network) if spec.rois_per_network else default_atlas()
        ds = generate_synthetic_cohort(spec.n_per_class, atlas, spec.series_len, spec.seed)
        manifest = write_dataset(ds, self.out / "cohort")
        self._dataset = None
        log.info("synth: %d subjects -> %s", len(ds.subjects), manifest)
        return manifest

    def plots(self) -> Path:
        self.split()
        entries = []
        for subject, net, rid, values in self._roi_jobs():
            params = self.embedding_params(values)
            path = self.plot_path(subject.subject_id, rid)
            path.parent.mkdir(parents=True, exist_ok=True)
            write_pgm(series_plot(values, params, self.cfg.target_size, rid), path)
            entries.append({"subject_id": subject.subject_id, "label": subject.label.text,
                            "network": net.name, "roi_id": rid, "M": params.M, "tau": params.tau,
                            "K": params.K, "path": str(path.relative_to(self.out / "plots"))})
        index = self.out / "plots" / "index.json"
        _write_json(index, {"schema": INDEX_SCHEMA, "target_size": self.cfg.target_size, "entries": entries})
        log.info("plots: %d images", len(entries))
        return index

    def train_ae(self) -> None:
        train_ids, _ = self.split()
        (self.out / "ae").mkdir(parents=True, exist_ok=True)
        for net in self.networks():
            images = self._network_images(net, train_ids)
            model = models.build_autoencoder(len(net.roi_ids), self.cfg.train.seed, self.cfg.target_size)
            history = models.train_autoencoder(model, images, self.cfg.train)
            model.save(self.out / "ae" / f"{net.slug}.rcnn")
            _write_loss_csv(self.out / "ae" / f"{net.slug}_loss.csv", history)
            self._audit("train-ae", net, train_ids)
            log.info("train-ae %s: %d images, final loss %s", net.name, len(images),
                     f"{history[-1]:.6f}" if history else "n/a")

    def embed(self) -> None:
        ids = sorted(s.subject_id for s in self.dataset().subjects)
        labels = self._labels()
        for net in self.networks():
            path = self.out / "ae" / f"{net.slug}.rcnn"
            if not path.is_file():
                raise StageError(f"autoencoder weights not found at {path} (run train-ae)")
            model = models.load_model(path)
            emb = models.encode_many(model, self._network_images(net, ids))
            out = self.out / "embeddings" / f"{net.slug}.csv"
            out.parent.mkdir(parents=True, exist_ok=True)
            with open(out, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["subject_id", "network", "label"] + embedding_columns())
                for sid, e in zip(ids, emb):
                    w.writerow([sid, net.name, labels[sid].text] + [repr(float(v)) for v in e.reshape(-1)])
            log.info("embed %s: %d subjects", net.name, len(ids))

    def train_clf(self) -> None:
        train_ids, _ = self.split()
        labels = self._labels()
        (self.out / "clf").mkdir(parents=True, exist_ok=True)
        for net in self.networks():
            emb = self._embeddings(net)
            samples = [(emb[sid], int(labels[sid])) for sid in train_ids]
            model = models.build_classifier(self.cfg.train.seed)
            history = models.train_classifier(model, samples, self.cfg.train)
            model.save(self.out / "clf" / f"{net.slug}.rcnn")
            _write_loss_csv(self.out / "clf" / f"{net.slug}_loss.csv", history)
            self._audit("train-clf", net, train_ids)

    def eval(self) -> str:
        _, test_ids = self.split()
        labels = self._labels()
        reports = []
        for net in self.networks():
            path = self.out / "clf" / f"{net.slug}.rcnn"
            if not path.is_file():
                raise StageError(f"classifier weights not found at {path} (run train-clf)")
            model = models.load_model(path)
            emb = self._embeddings(net)
            probs = models.predict_proba(model, [emb[sid] for sid in test_ids])
            confusion = np.zeros((2, 2), dtype=np.int64)
            for sid, p in zip(test_ids, probs):
                confusion[int(labels[sid]), int(np.argmax(p))] += 1
            report = compute_metrics(confusion, net.name)
            _write_json(self.out / "reports" / f"{net.slug}.json", report.to_json())
            reports.append(report)
        table = render_report(reports)
        (self.out / "reports" / "table.txt").write_text(table)
        return table

    def rqa(self) -> None:
        rows: dict[str, list] = {}
        for subject, net, rid, values in self._roi_jobs():
            params = self.embedding_params(values)
            binary, eps = binarize(distance_matrix(delay_embed(values, params)), self.cfg.target_rr)
            rows.setdefault(net.slug, []).append((subject.subject_id, rid, compute_rqa(binary, epsilon=eps)))
        (self.out / "rqa").mkdir(parents=True, exist_ok=True)
        for slug, items in rows.items():
            write_rqa_csv(self.out / "rqa" / f"{slug}.csv", items)

    def run_stage(self, stage: str):
        if stage not in STAGES:
            raise ValidationError(f"unknown stage {stage!r}")
        return getattr(self, stage.replace("-", "_"))()

    def run_all(self) -> str:
        """Every stage in order (synth only for synthetic configs); returns the report table."""
        for stage in STAGES:
            if stage == "synth" and self.cfg.synthetic is None:
                continue
            self.run_stage(stage)
        return (self.out / "reports" / "table.txt").read_text()


def _cmd(stage: str):
    def run(cfg: PipelineConfig):
        return Pipeline(cfg).run_stage(stage)
    run.__name__ = "cmd_" + stage.replace("-", "_")
    run.__doc__ = f"Run the {stage} stage for ``cfg``."
    return run


cmd_synth = _cmd("synth")
cmd_plots = _cmd("plots")
cmd_train_ae = _cmd("train-ae")
cmd_embed = _cmd("embed")
cmd_train_clf = _cmd("train-clf")
cmd_eval = _cmd("eval")
cmd_rqa = _cmd("rqa")
