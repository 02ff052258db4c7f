"""Atlas / subject / time-series data model, file IO and synthetic cohorts."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DegenerateSeriesError, ValidationError
from .rng import SplitMix64

MAX_ROIS = 160

DEFAULT_NETWORKS = (
    ("cingulo-opercular", 28),
    ("frontoparietal", 27),
    ("default mode", 26),
    ("sensorimotor", 27),
    ("occipital", 26),
    ("cerebellum", 26),
)


class Label(enum.IntEnum):
    HEALTHY = 0
    MCI = 1

    @property
    def text(self) -> str:
        return "Healthy" if self is Label.HEALTHY else "MCI"

    @classmethod
    def parse(cls, value: str) -> "Label":
        if value == "Healthy":
            return cls.HEALTHY
        if value == "MCI":
            return cls.MCI
        raise ValidationError(f"label must be 'Healthy' or 'MCI', got {value!r}")


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    roi_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "roi_ids", tuple(int(r) for r in self.roi_ids))
        if not self.roi_ids:
            raise ValidationError(f"network {self.name!r} has no ROIs")

    @property
    def slug(self) -> str:
        return self.name.lower().replace(" ", "_").replace("-", "_")


@dataclass(frozen=True)
class AtlasSpec:
    networks: tuple[NetworkSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "networks", tuple(self.networks))
        ids = [r for n in self.networks for r in n.roi_ids]
        if len(set(ids)) != len(ids):
            raise ValidationError("roi_ids must be unique across networks")
        if len(ids) > MAX_ROIS:
            raise ValidationError(f"atlas has {len(ids)} ROIs, at most {MAX_ROIS} allowed")
        names = [n.name for n in self.networks]
        if len(set(names)) != len(names):
            raise ValidationError("network names must be unique")

    @property
    def roi_ids(self) -> tuple[int, ...]:
        return tuple(r for n in self.networks for r in n.roi_ids)

    def network(self, name: str) -> NetworkSpec:
        for n in self.networks:
            if n.name == name or n.slug == name:
                return n
        raise ValidationError(f"unknown network {name!r}")

    def to_json(self) -> dict:
        return {"networks": [{"name": n.name, "roi_ids": list(n.roi_ids)} for n in self.networks]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "AtlasSpec":
        try:
            return cls(tuple(NetworkSpec(n["name"], tuple(n["roi_ids"])) for n in obj["networks"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed atlas: {exc}") from exc


def default_atlas() -> AtlasSpec:
    """Six networks of 26-28 ROIs, 160 ROIs in total, ids 1..160."""
    nets, start = [], 1
    for name, size in DEFAULT_NETWORKS:
        nets.append(NetworkSpec(name, tuple(range(start, start + size))))
        start += size
    return AtlasSpec(tuple(nets))


def reduced_atlas(rois_per_network: int) -> AtlasSpec:
    """The default atlas with each network cut to its first ``rois_per_network`` ROIs."""
    if rois_per_network < 1:
        raise ValidationError("rois_per_network must be >= 1")
    return AtlasSpec(tuple(NetworkSpec(n.name, n.roi_ids[:rois_per_network])
                           for n in default_atlas().networks))


@dataclass(frozen=True, eq=False)
class RoiTimeSeries:
    roi_id: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size < 2:
            raise ValidationError(f"ROI {self.roi_id}: series needs N >= 2, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"ROI {self.roi_id}: non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "roi_id", int(self.roi_id))

    @property
    def N(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, RoiTimeSeries):
            return NotImplemented
        return self.roi_id == other.roi_id and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    label: Label
    series: Mapping[int, RoiTimeSeries]

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        lengths = {s.N for s in self.series.values()}
        if len(lengths) > 1:
            raise ValidationError(f"subject {self.subject_id}: unequal series lengths {sorted(lengths)}")
        for rid, s in self.series.items():
            if rid != s.roi_id:
                raise ValidationError(f"subject {self.subject_id}: key {rid} != roi_id {s.roi_id}")

    @property
    def N(self) -> int:
        return next(iter(self.series.values())).N

    def network_stack(self, network: NetworkSpec) -> np.ndarray:
        """(R, N) array of the network's ROI series in atlas order."""
        try:
            return np.stack([self.series[r].values for r in network.roi_ids])
        except KeyError as exc:
            raise ValidationError(f"subject {self.subject_id} lacks ROI {exc.args[0]}") from None


@dataclass(frozen=True)
class Dataset:
    atlas: AtlasSpec
    subjects: tuple[SubjectRecord, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValidationError("subject_ids must be unique")
        known = set(self.atlas.roi_ids)
        for s in self.subjects:
            unknown = set(s.series) - known
            if unknown:
                raise ValidationError(f"subject {s.subject_id}: unknown roi_id {min(unknown)}")
            if not any(set(n.roi_ids) <= set(s.series) for n in self.atlas.networks):
                raise ValidationError(f"subject {s.subject_id} covers no complete network")

    def class_counts(self) -> dict[str, int]:
        counts = {"Healthy": 0, "MCI": 0}
        for s in self.subjects:
            counts[s.label.text] += 1
        return counts

    def subset(self, ids: Iterable[str]) -> "Dataset":
        keep = set(ids)
        return Dataset(self.atlas, tuple(s for s in self.subjects if s.subject_id in keep), self.seed)


# --------------------------------------------------------------------------- IO

def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    with open(path) as fh:
        return json.load(fh)


def read_series_csv(path: Path) -> dict[int, RoiTimeSeries]:
    if not path.is_file():
        raise FileNotFoundError(f"missing file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        roi_ids = [int(h.strip().removeprefix("roi_")) for h in header]
    except ValueError as exc:
        raise ValidationError(f"{path}: bad header {header!r}") from exc
    if any(len(r) != len(header) for r in body):
        raise ValidationError(f"{path}: ragged rows")
    try:
        values = np.array(body, dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric value") from exc
    if values.shape[0] < 2:
        raise ValidationError(f"{path}: series needs N >= 2, got {values.shape[0]}")
    return {rid: RoiTimeSeries(rid, values[:, k]) for k, rid in enumerate(roi_ids)}


def write_series_csv(path: Path, series: Mapping[int, RoiTimeSeries]) -> None:
    rids = list(series)
    cols = np.stack([series[r].values for r in rids], axis=1)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"roi_{r}" for r in rids) + "\n")
        for row in cols:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_dataset(manifest_path) -> Dataset:
    """Load a dataset from a JSON manifest; relative paths resolve against its folder."""
    manifest_path = Path(manifest_path)
    man = _read_json(manifest_path)
    base = manifest_path.parent
    try:
        atlas = AtlasSpec.from_json(_read_json(base / man["atlas"]))
        entries = man["subjects"]
        seed = int(man.get("seed", 0))
    except KeyError as exc:
        raise ValidationError(f"manifest missing key {exc.args[0]!r}") from None
    subjects = []
    for e in entries:
        label = Label.parse(e["label"])
        subjects.append(SubjectRecord(str(e["id"]), label, read_series_csv(base / e["csv"])))
    return Dataset(atlas, tuple(subjects), seed)


def write_dataset(dataset: Dataset, out_dir) -> Path:
    """Write atlas, per-subject CSVs and manifest under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    (out / "subjects").mkdir(parents=True, exist_ok=True)
    with open(out / "atlas.json", "w") as fh:
        json.dump(dataset.atlas.to_json(), fh, indent=1)
    entries = []
    for s in dataset.subjects:
        rel = f"subjects/{s.subject_id}.csv"
        write_series_csv(out / rel, s.series)
        entries.append({"id": s.subject_id, "label": s.label.text, "csv": rel})
    manifest = out / "manifest.json"
    with open(manifest, "w") as fh:
        json.dump({"atlas": "atlas.json", "subjects": entries, "seed": dataset.seed}, fh, indent=1)
    return manifest


# ------------------------------------------------------------------ synthetic

NOISE_FRACTION = 0.1
LOGISTIC_R = 3.9
LOGISTIC_BURN_IN = 100
PERIOD_RANGE = (8.0, 32.0)


def _healthy_series(rng: SplitMix64, n_rois: int, length: int) -> np.ndarray:
    period = rng.uniform(n_rois, *PERIOD_RANGE)
    phase = rng.uniform(n_rois, 0.0, 2.0 * np.pi)
    t = np.arange(length, dtype=np.float64)
    clean = np.sin(2.0 * np.pi * t[None, :] / period[:, None] + phase[:, None])
    return clean + rng.normal(n_rois * length, NOISE_FRACTION).reshape(n_rois, length)


def _mci_series(rng: SplitMix64, n_rois: int, length: int) -> np.ndarray:
    x = rng.uniform(n_rois, 1e-3, 1.0 - 1e-3)
    out = np.empty((n_rois, length))
    for _ in range(LOGISTIC_BURN_IN):
        x = LOGISTIC_R * x * (1.0 - x)
    for t in range(length):
        out[:, t] = x
        x = LOGISTIC_R * x * (1.0 - x)
    # map [0, 1] to amplitude-1 signal so the noise level matches the sinusoids
    out = 2.0 * out - 1.0
    return out + rng.normal(n_rois * length, NOISE_FRACTION).reshape(n_rois, length)


def generate_synthetic_cohort(n_per_class: int, atlas: AtlasSpec | None = None,
                              series_len: int = 200, seed: int = 0) -> Dataset:
    """Two-class stand-in cohort.

    Healthy subjects get noisy sinusoids (period uniform in [8, 32) samples,
    random phase); MCI subjects get logistic-map series at r = 3.9. Both carry
    Gaussian noise of 0.1 times the unit amplitude. The first ``n_per_class``
    subjects are Healthy, the rest MCI.
    """
    if n_per_class < 1:
        raise ValidationError("n_per_class must be >= 1")
    if series_len < 64:
        raise ValidationError(f"series_len must be >= 64, got {series_len}")
    atlas = atlas or default_atlas()
    rng = SplitMix64(seed)
    rois = atlas.roi_ids
    subjects = []
    for idx in range(2 * n_per_class):
        label = Label.HEALTHY if idx < n_per_class else Label.MCI
        sub_rng = rng.spawn(idx)
        gen = _healthy_series if label is Label.HEALTHY else _mci_series
        block = gen(sub_rng, len(rois), series_len)
        series = {r: RoiTimeSeries(r, block[k]) for k, r in enumerate(rois)}
        subjects.append(SubjectRecord(f"sub{idx:03d}", label, series))
    return Dataset(atlas, tuple(subjects), seed)


# ---------------------------------------------------------------- transforms

def split_train_test(dataset: Dataset, test_fraction: float = 0.2,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified split; each class sends round-half-up(fraction * size) subjects to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must lie in (0, 1)")
    rng = SplitMix64(seed)
    by_class = {label: [s.subject_id for s in dataset.subjects if s.label is label] for label in Label}
    for label, members in by_class.items():
        if not members:
            raise ValidationError(f"class {label.text} is absent")
    test_ids: set[str] = set()
    for label, members in by_class.items():
        n_test = math.floor(test_fraction * len(members) + 0.5)
        if n_test >= len(members):
            raise ValidationError(f"class {label.text} would have no training subjects")
        perm = rng.spawn(int(label)).permutation(len(members))
        test_ids.update(members[i] for i in perm[:n_test])
    train = [s.subject_id for s in dataset.subjects if s.subject_id not in test_ids]
    return dataset.subset(train), dataset.subset(test_ids)


def zscore_normalize(series: RoiTimeSeries) -> RoiTimeSeries:
    v = series.values
    mean = v.mean()
    centered = v - mean
    std = np.sqrt(np.mean(centered * centered))
    if std == 0.0 or std <= 1e-14 * max(1.0, abs(mean)):
        raise DegenerateSeriesError()
    return RoiTimeSeries(series.roi_id, centered / std)
