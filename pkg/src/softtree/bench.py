"""Benchmark grids: datasets x methods x repeats, scored by held-out ROC-AUC."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .baselines import cart_fit, logreg_fit
from .datakit import Dataset, SynthSpec, apply_standardizer, fit_standardizer, load_csv, load_named, make_synth, split
from .errors import ConfigError
from .metrics import aggregate, roc_auc
from .model import TreeConfig, init_tree
from .modelio import score
from .trainer import TrainConfig, train

Method = Literal["DT", "LR", "SDT", "SMSDT"]
METHOD_ORDER = ("DT", "LR", "SDT", "SMSDT")
ROWS_HEADER = ("dataset", "method", "seed", "auc", "wall_time_s")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class Hyper(_Strict):
    depth: int | None = Field(None, ge=1)
    lam: float | None = Field(None, ge=0, alias="lambda")
    epochs: int | None = Field(None, ge=1)
    batch_size: int | None = Field(None, ge=1)
    lr: float | None = Field(None, gt=0)
    beta: float | None = Field(None, gt=0)
    hidden_dim: int | None = Field(None, ge=1)
    l2: float | None = Field(None, ge=0)


class SynthRef(_Strict):
    n_samples: int = Field(ge=2)
    n_features: int = Field(ge=1)
    n_informative: int = Field(30, ge=1)
    class_sep: float = Field(1.0, gt=0)
    flip_y: float = Field(0.01, ge=0, le=1)


class DatasetRef(_Strict):
    """Exactly one of ``config`` (bundled name or JSON path), ``csv`` or ``synth``."""

    name: str | None = None
    config: str | None = None
    csv: str | None = None
    label_column: str = "label"
    positive_label: str | list[str] = "1"
    negative_label: str | list[str] | None = None
    drop_columns: list[str] = []
    synth: SynthRef | None = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("config", "csv", "synth") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"give exactly one of config/csv/synth, got {given or 'none'}")
        return self

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.config:
            return Path(self.config).stem
        if self.csv:
            return Path(self.csv).stem
        return f"synth_n{self.synth.n_samples}_d{self.synth.n_features}"


class BenchSpec(_Strict):
    datasets: list[DatasetRef] = Field(
        default_factory=lambda: [DatasetRef(config="breast_cancer"), DatasetRef(config="pima")],
        min_length=1,
    )
    methods: list[Method] = Field(default_factory=lambda: list(METHOD_ORDER), min_length=1)
    repeats: int = Field(5, ge=1)
    base_seed: int = Field(0, ge=0)
    train_frac: float = Field(0.8, gt=0, lt=1)
    depth: int = Field(3, ge=1)
    lam: float = Field(0.1, ge=0, alias="lambda")
    epochs: int = Field(200, ge=1)
    batch_size: int = Field(128, ge=1)
    lr: float = Field(0.01, gt=0)
    beta: float = Field(1.0, gt=0)
    hidden_dim: int | None = Field(None, ge=1)
    l2: float = Field(1e-4, ge=0)
    top_k: int = Field(3, ge=1)
    data_dir: str | None = None
    overrides: dict[Method, Hyper] = {}

    def hyper(self, method: str) -> dict:
        base = {k: getattr(self, k) for k in ("depth", "lam", "epochs", "batch_size", "lr", "beta", "hidden_dim", "l2")}
        if method in self.overrides:
            base.update(self.overrides[method].model_dump(exclude_none=True))
        return base


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(path=None, overrides: dict | None = None) -> BenchSpec:
    """Load a JSON bench config (missing or empty file means defaults) and apply flag overrides."""
    doc: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        if text.strip():
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return BenchSpec.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def cell_seed(base_seed: int, repeat: int) -> int:
    return base_seed * 1000 + repeat


def load_ref(ref: DatasetRef, seed: int, data_dir=None) -> Dataset:
    if ref.synth is not None:
        return make_synth(SynthSpec(seed=seed, **ref.synth.model_dump()))
    if ref.config is not None:
        return load_named(ref.config, data_dir)
    return load_csv(ref.csv, ref.label_column, ref.positive_label,
                    negative_label=ref.negative_label, drop_columns=ref.drop_columns)


def fit_method(method: str, train_set: Dataset, hyper: dict, seed: int):
    tcfg = TrainConfig(epochs=hyper["epochs"], batch_size=hyper["batch_size"],
                       learning_rate=hyper["lr"], shuffle_seed=seed)
    if method == "DT":
        return cart_fit(train_set.X, train_set.y, max_depth=hyper["depth"])
    if method == "LR":
        return logreg_fit(train_set.X, train_set.y, l2=hyper["l2"], cfg=tcfg)
    cfg = TreeConfig(depth=hyper["depth"], input_dim=train_set.n_features, n_classes=2, variant=method,
                     hidden_dim=hyper["hidden_dim"], beta=hyper["beta"], lam=hyper["lam"], seed=seed)
    model, _ = train(init_tree(cfg), train_set, tcfg)
    return model


@dataclass
class BenchRow:
    dataset: str
    method: str
    seed: int
    auc: float | None
    wall_time_s: float
    error: str | None = None

    @property
    def auc_cell(self) -> str:
        return repr(self.auc) if self.error is None else f"ERROR: {self.error}"


_DATA_CACHE: dict = {}


def _cell(spec: BenchSpec, ds_index: int, method: str, repeat: int) -> BenchRow:
    ref = spec.datasets[ds_index]
    seed = cell_seed(spec.base_seed, repeat)
    start = time.perf_counter()
    try:
        key = (ref.model_dump_json(), spec.data_dir, seed if ref.synth is not None else None)
        if key not in _DATA_CACHE:
            if len(_DATA_CACHE) > 8:
                _DATA_CACHE.clear()
            _DATA_CACHE[key] = load_ref(ref, seed, spec.data_dir)
        data = _DATA_CACHE[key]
        train_set, test_set = split(data, spec.train_frac, seed=seed, stratified=True)
        std = fit_standardizer(train_set.X)
        train_set = train_set.with_X(apply_standardizer(std, train_set.X))
        model = fit_method(method, train_set, spec.hyper(method), seed)
        auc = roc_auc(score(model, apply_standardizer(std, test_set.X)), test_set.y).auc
        return BenchRow(ref.label, method, seed, auc, time.perf_counter() - start)
    except Exception as exc:  # a failing cell must not stop the grid
        return BenchRow(ref.label, method, seed, None, time.perf_counter() - start, f"{type(exc).__name__}: {exc}")


@dataclass
class BenchResult:
    rows: list[BenchRow] = field(default_factory=list)

    def table(self) -> dict[tuple[str, str], float]:
        """Mean AUC per (dataset, method) over successful repeats."""
        cells: dict[tuple[str, str], list[float]] = {}
        for r in self.rows:
            if r.error is None:
                cells.setdefault((r.dataset, r.method), []).append(r.auc)
        return {k: aggregate(v)[0] for k, v in cells.items()}

    def grand_averages(self) -> dict[str, float]:
        per_method: dict[str, list[float]] = {}
        for (_, method), value in self.table().items():
            per_method.setdefault(method, []).append(value)
        return {m: aggregate(v)[0] for m, v in per_method.items()}

    def rows_csv(self, wall_time: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ROWS_HEADER if wall_time else ROWS_HEADER[:-1])
        for r in self.rows:
            cells = [r.dataset, r.method, r.seed, r.auc_cell]
            writer.writerow(cells + [f"{r.wall_time_s:.3f}"] if wall_time else cells)
        return buf.getvalue()

    def markdown(self) -> str:
        table = self.table()
        datasets = list(dict.fromkeys(r.dataset for r in self.rows))
        methods = [m for m in METHOD_ORDER if any(r.method == m for r in self.rows)]
        out = ["| Dataset | " + " | ".join(methods) + " |", "|---|" + "---|" * len(methods)]
        for ds in datasets:
            vals = [f"{table[(ds, m)]:.3f}" if (ds, m) in table else "n/a" for m in methods]
            out.append(f"| {ds} | " + " | ".join(vals) + " |")
        grand = self.grand_averages()
        out.append("| Average | " + " | ".join(f"{grand[m]:.3f}" if m in grand else "n/a" for m in methods) + " |")
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows_path, md_path = out_dir / "rows.csv", out_dir / "summary.md"
        rows_path.write_text(self.rows_csv(), encoding="utf-8")
        md_path.write_text(self.markdown(), encoding="utf-8")
        return rows_path, md_path


def default_threads() -> int:
    env = os.environ.get("SOFTTREE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SOFTTREE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_bench(spec: BenchSpec, threads: int | None = None, progress=None) -> BenchResult:
    """Run every (dataset, method, repeat) cell; rows come back sorted by dataset, method, repeat."""
    cells = [
        (d, m, r)
        for d in range(len(spec.datasets))
        for m in sorted(set(spec.methods), key=METHOD_ORDER.index)
        for r in range(spec.repeats)
    ]
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(cells) == 1:
        rows = []
        for c in cells:
            rows.append(_cell(spec, *c))
            if progress:
                progress(rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(cells))) as pool:
            futures = [pool.submit(_cell, spec, *c) for c in cells]
            rows = []
            for fut in futures:
                rows.append(fut.result())
                if progress:
                    progress(rows[-1])
    return BenchResult(rows)
