"""Datasets: CSV ingestion, z-score standardization, stratified splits and a
hypercube-cluster synthetic generator."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyDatasetError,
    InputError,
    SchemaError,
    StratificationError,
)

MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null", "NULL"})
LABEL_COLUMN = "label"


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    positive_label: str = "1"
    source: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise InputError(f"X shape {self.X.shape} does not match {self.y.shape[0]} labels")
        if len(self.feature_names) != self.X.shape[1]:
            raise InputError(f"{len(self.feature_names)} feature names for {self.X.shape[1]} columns")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], list(self.feature_names),
                       self.positive_label, self.source, dict(self.meta))

    def with_X(self, X) -> "Dataset":
        return Dataset(X, self.y, list(self.feature_names), self.positive_label, self.source, dict(self.meta))

    def to_csv(self, path) -> None:
        """Write the dataset back out as CSV with a trailing ``label`` column."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.feature_names, LABEL_COLUMN])
            for row, label in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])


def _parse_float(cell: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def _label_matches(cell: str, wanted: Sequence[str]) -> bool:
    for w in wanted:
        if cell == w:
            return True
        a, b = _parse_float(cell), _parse_float(w)
        if not (math.isnan(a) or math.isnan(b)) and a == b:
            return True
    return False


def _as_list(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value]
    return [str(value).strip()]


def load_csv(
    path,
    label_column: str,
    positive_label="1",
    missing_policy: str = "median",
    *,
    negative_label=None,
    drop_columns: Sequence[str] = (),
) -> Dataset:
    """Read a headed CSV into a binary-labelled :class:`Dataset`.

    Columns where at least half the non-missing cells parse as numbers are
    numeric (other cells become missing); the rest are one-hot encoded with
    categories in sorted order.  Rows without a label are dropped.  Labels
    equal to ``positive_label`` (a value or list of values) map to 1; when
    ``negative_label`` is given instead, everything except it maps to 1.
    """
    if missing_policy not in ("median", "mean", "drop"):
        raise ConfigError(f"unknown missing_policy {missing_policy!r}")
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise SchemaError(f"{path}: label column {label_column!r} not found in header {header}")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {lineno} has {len(r)} cells, header has {len(header)}")

    label_idx = header.index(label_column)
    body = [r for r in body if r[label_idx].strip() not in MISSING_TOKENS]
    if not body:
        raise EmptyDatasetError(f"{path}: no rows with a label")

    labels = [r[label_idx].strip() for r in body]
    if negative_label is not None:
        neg = _as_list(negative_label)
        y = np.array([0 if _label_matches(v, neg) else 1 for v in labels])
        positive_desc = f"not {'|'.join(neg)}"
    else:
        pos = _as_list(positive_label)
        if not pos:
            raise ConfigError("positive_label is required")
        y = np.array([1 if _label_matches(v, pos) else 0 for v in labels])
        positive_desc = "|".join(pos)

    drop = set(drop_columns) | {label_column}
    unknown = set(drop_columns) - set(header)
    if unknown:
        raise SchemaError(f"{path}: drop_columns not in header: {sorted(unknown)}")
    columns, names = [], []
    for j, name in enumerate(header):
        if name in drop:
            continue
        cells = [r[j].strip() for r in body]
        present = [c for c in cells if c not in MISSING_TOKENS]
        parsed = [_parse_float(c) for c in present]
        n_numeric = sum(not math.isnan(v) for v in parsed)
        if present and 2 * n_numeric >= len(present):
            columns.append(np.array([_parse_float(c) if c not in MISSING_TOKENS else math.nan for c in cells]))
            names.append(name)
        else:
            for cat in sorted(set(present)):
                columns.append(np.array([1.0 if c == cat else 0.0 for c in cells]))
                names.append(f"{name}={cat}")

    X = np.column_stack(columns) if columns else np.empty((len(body), 0))
    missing = np.isnan(X)
    if missing_policy == "drop":
        keep = ~missing.any(axis=1)
        X, y = X[keep], y[keep]
        if X.shape[0] == 0:
            raise EmptyDatasetError(f"{path}: every row has a missing value")
    elif missing.any():
        for j in np.flatnonzero(missing.any(axis=0)):
            col = X[:, j]
            ok = col[~np.isnan(col)]
            fill = 0.0 if ok.size == 0 else float(np.median(ok) if missing_policy == "median" else ok.mean())
            col[np.isnan(col)] = fill
    return Dataset(X, y, names, positive_desc, str(path))


def _bundled_dir():
    return resources.files("softtree") / "datasets"


def list_bundled() -> list[str]:
    return sorted(p.name[:-5] for p in _bundled_dir().iterdir() if p.name.endswith(".json"))


def load_dataset_config(ref) -> tuple[dict, Path]:
    """Return ``(config, directory)`` for a bundled dataset name or a JSON path."""
    path = Path(ref)
    if path.suffix != ".json" or not path.exists():
        candidate = _bundled_dir() / f"{ref}.json"
        if not candidate.is_file():
            raise SchemaError(f"unknown dataset {ref!r}; bundled: {', '.join(list_bundled())}")
        path = Path(str(candidate))
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    for key in ("file", "label_column"):
        if key not in cfg:
            raise SchemaError(f"{path}: dataset config lacks {key!r}")
    return cfg, path.parent


def load_named(ref, data_dir=None) -> Dataset:
    """Load a dataset through its JSON config (label mapping, dropped columns).

    The CSV is looked up in ``data_dir`` first, then next to the config.
    """
    cfg, cfg_dir = load_dataset_config(ref)
    candidates = [Path(data_dir) / cfg["file"]] if data_dir else []
    candidates.append(cfg_dir / cfg["file"])
    for csv_path in candidates:
        if csv_path.exists():
            break
    else:
        raise SchemaError(
            f"dataset {cfg.get('name', ref)!r}: {cfg['file']} not found "
            f"(looked in {', '.join(str(c.parent) for c in candidates)}); "
            + cfg.get("obtain", "download it and pass its directory")
        )
    ds = load_csv(
        csv_path,
        cfg["label_column"],
        cfg.get("positive_label", "1"),
        cfg.get("missing_policy", "median"),
        negative_label=cfg.get("negative_label"),
        drop_columns=cfg.get("drop_columns", ()),
    )
    ds.meta["name"] = cfg.get("name", str(ref))
    return ds


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


def fit_standardizer(X_train) -> Standardizer:
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("standardizer needs a non-empty 2-D matrix")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    # constant columns pass through unchanged
    constant = scale < 1e-12
    scale[constant] = 1.0
    mean[constant] = 0.0
    return Standardizer(mean, scale)


def apply_standardizer(s: Standardizer, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != s.mean.shape[0]:
        raise InputError(f"standardizer fit on {s.mean.shape[0]} features, got shape {X.shape}")
    return (X - s.mean) / s.scale


@dataclass(frozen=True)
class SynthSpec:
    n_samples: int
    n_features: int
    n_informative: int = 30
    class_sep: float = 1.0
    flip_y: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if not 1 <= self.n_informative <= self.n_features:
            raise ConfigError(
                f"n_informative ({self.n_informative}) must be in [1, n_features={self.n_features}]"
            )
        if not 0.0 <= self.flip_y <= 1.0:
            raise ConfigError("flip_y must lie in [0, 1]")
        if not self.class_sep > 0:
            raise ConfigError("class_sep must be positive")


def make_synth(spec: SynthSpec) -> Dataset:
    """Two Gaussian clusters on opposite-ish hypercube vertices in an informative
    subspace, linearly mixed, padded with pure-noise columns, then column-permuted."""
    rng = np.random.default_rng(spec.seed)
    k, n = spec.n_informative, spec.n_samples
    v0 = rng.choice([-1.0, 1.0], size=k)
    v1 = rng.choice([-1.0, 1.0], size=k)
    while np.array_equal(v0, v1):
        v1 = rng.choice([-1.0, 1.0], size=k)
    counts = (n // 2, n - n // 2)
    informative = np.vstack([
        v * spec.class_sep + rng.normal(size=(c, k)) for v, c in zip((v0, v1), counts)
    ])
    informative = informative @ rng.normal(size=(k, k))
    noise = rng.normal(size=(n, spec.n_features - k))
    X = np.hstack([informative, noise])
    y = np.repeat([0, 1], counts)
    flip = rng.random(n) < spec.flip_y
    y[flip] = 1 - y[flip]
    perm = rng.permutation(spec.n_features)
    X = X[:, perm]
    rows = rng.permutation(n)
    X, y = X[rows], y[rows]
    info_cols = np.flatnonzero(perm < k).tolist()
    return Dataset(
        X, y, [f"x{j}" for j in range(spec.n_features)], "1",
        source=f"synthetic(n={n}, d={spec.n_features}, informative={k}, sep={spec.class_sep}, "
               f"flip={spec.flip_y}, seed={spec.seed}) informative_columns={info_cols}",
        meta={"informative": info_cols, "spec": spec.__dict__.copy()},
    )


def _n_train(n: int, frac: float) -> int:
    return min(max(int(math.floor(frac * n + 0.5)), 1), n - 1)


def split(dataset: Dataset, train_frac: float = 0.8, seed: int = 0, stratified: bool = True):
    """Seeded (stratified) train/test partition; both parts keep the original row order."""
    if not 0.0 < train_frac < 1.0:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    if stratified:
        train_idx = []
        for c in np.unique(dataset.y):
            members = np.flatnonzero(dataset.y == c)
            if members.size < 2:
                raise StratificationError(f"class {c} has {members.size} sample(s); need at least 2")
            members = rng.permutation(members)
            train_idx.append(members[: _n_train(members.size, train_frac)])
        train_idx = np.concatenate(train_idx)
    else:
        if n < 2:
            raise StratificationError("need at least 2 samples to split")
        train_idx = rng.permutation(n)[: _n_train(n, train_frac)]
    mask = np.zeros(n, dtype=bool)
    mask[train_idx] = True
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(np.flatnonzero(~mask))
