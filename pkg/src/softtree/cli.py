"""``softtree`` command line: gen, train, eval, viz, bench."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bench import METHOD_ORDER, parse_config, run_bench
from .datakit import (
    SynthSpec,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    load_named,
    make_synth,
)
from .errors import SoftTreeError
from .metrics import roc_auc
from .model import SoftTree, TreeConfig, init_tree
from .modelio import load_model, prepare, save_model, score
from .trainer import TrainConfig, train
from .treeviz import export_dot, export_history, gate_trace


def _data_options(f):
    f = click.option("--data-dir", type=click.Path(file_okay=False), help="Directory holding dataset CSVs.")(f)
    f = click.option("--dataset", "dataset_ref", help="Bundled dataset name or dataset config JSON.")(f)
    f = click.option("--positive-label", default="1", show_default=True)(f)
    f = click.option("--label-column", default="label", show_default=True)(f)
    f = click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), help="CSV file.")(f)
    return f


def _load(data_path, label_column, positive_label, dataset_ref, data_dir):
    if (data_path is None) == (dataset_ref is None):
        raise click.UsageError("give exactly one of --data or --dataset")
    if dataset_ref is not None:
        return load_named(dataset_ref, data_dir)
    return load_csv(data_path, label_column, positive_label)


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Soft decision tree classifiers and their benchmark harness."""


@main.command()
@click.option("--n-samples", type=int, default=1000, show_default=True)
@click.option("--n-features", type=int, default=50, show_default=True)
@click.option("--n-informative", type=int, default=30, show_default=True)
@click.option("--class-sep", type=float, default=1.0, show_default=True)
@click.option("--flip-y", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output CSV path.")
def gen(n_samples, n_features, n_informative, class_sep, flip_y, seed, out):
    """Write a synthetic binary classification CSV (label column 'label')."""
    try:
        ds = make_synth(SynthSpec(n_samples, n_features, n_informative, class_sep, flip_y, seed))
    except SoftTreeError as exc:
        _fail(exc)
    ds.to_csv(out)
    click.echo(f"wrote {out}: {len(ds)} rows, informative columns {ds.meta['informative']}")


@main.command("train")
@_data_options
@click.option("--method", type=click.Choice(METHOD_ORDER), default="SDT", show_default=True)
@click.option("--depth", type=int, default=3, show_default=True)
@click.option("--lambda", "lam", type=float, default=0.1, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--hidden-dim", type=int, default=None)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--batch-size", type=int, default=128, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--l2", type=float, default=1e-4, show_default=True, help="LR only.")
@click.option("--val-fraction", type=float, default=0.0, show_default=True)
@click.option("--snapshots/--no-snapshots", default=False, help="Store full parameters in the history.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
def train_cmd(data_path, label_column, positive_label, dataset_ref, data_dir, method, depth, lam, beta,
              hidden_dim, epochs, batch_size, lr, l2, val_fraction, snapshots, seed, out):
    """Fit a model on a (standardized) dataset; writes model.json and history.jsonl."""
    from .baselines import cart_fit, logreg_fit

    try:
        ds = _load(data_path, label_column, positive_label, dataset_ref, data_dir)
        std = fit_standardizer(ds.X)
        ds = ds.with_X(apply_standardizer(std, ds.X))
        tcfg = TrainConfig(epochs=epochs, batch_size=batch_size, learning_rate=lr, shuffle_seed=seed,
                           val_fraction=val_fraction, keep_snapshots=snapshots)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if method == "DT":
            model = cart_fit(ds.X, ds.y, max_depth=depth)
        elif method == "LR":
            model = logreg_fit(ds.X, ds.y, l2=l2, cfg=tcfg)
        else:
            cfg = TreeConfig(depth=depth, input_dim=ds.n_features, n_classes=2, variant=method,
                             hidden_dim=hidden_dim, beta=beta, lam=lam, seed=seed)
            model, history = train(init_tree(cfg), ds, tcfg)
            export_history(history, out_dir / "history.jsonl")
            last = history[-1]
            click.echo(f"epoch {last.epoch}: loss {last.loss_total:.6f} (data {last.loss_data:.6f})")
        save_model(out_dir / "model.json", model, std, ds.feature_names)
        click.echo(f"train AUC {roc_auc(score(model, ds.X), ds.y).auc:.4f}")
        click.echo(f"wrote {out_dir / 'model.json'}")
    except SoftTreeError as exc:
        _fail(exc)


@main.command("eval")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@_data_options
def eval_cmd(model_path, data_path, label_column, positive_label, dataset_ref, data_dir):
    """Print the ROC-AUC of a saved model on a dataset."""
    try:
        model, std, _ = load_model(model_path)
        ds = _load(data_path, label_column, positive_label, dataset_ref, data_dir)
        res = roc_auc(score(model, prepare(ds.X, std)), ds.y)
    except SoftTreeError as exc:
        _fail(exc)
    click.echo(json.dumps({"auc": res.auc, "n_pos": res.n_pos, "n_neg": res.n_neg}))


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@_data_options
@click.option("--top-k", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="DOT file (stdout when omitted).")
def viz(model_path, data_path, label_column, positive_label, dataset_ref, data_dir, top_k, out):
    """Export a soft tree with dataset-averaged gate statistics as Graphviz DOT."""
    try:
        model, std, names = load_model(model_path)
        if not isinstance(model, SoftTree):
            raise click.UsageError("viz needs an SDT or SMSDT model")
        ds = _load(data_path, label_column, positive_label, dataset_ref, data_dir)
        text = export_dot(model, gate_trace(model, prepare(ds.X, std)), names or ds.feature_names, top_k)
    except SoftTreeError as exc:
        _fail(exc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, help="Base seed; repeat r uses seed*1000 + r.")
@click.option("--out", type=click.Path(file_okay=False), default="bench_out", show_default=True)
@click.option("--depth", type=int)
@click.option("--lambda", "lam", type=float)
@click.option("--epochs", type=int)
@click.option("--batch-size", type=int)
@click.option("--lr", type=float)
@click.option("--methods", help="Comma-separated subset of DT,LR,SDT,SMSDT.")
@click.option("--repeats", type=int)
@click.option("--top-k", type=int)
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--threads", type=int, help="Worker processes (default: $SOFTTREE_THREADS or CPU count).")
def bench(config_path, seed, out, depth, lam, epochs, batch_size, lr, methods, repeats, top_k, data_dir, threads):
    """Run a dataset x method x repeat AUC grid; writes rows.csv and summary.md."""
    overrides = {
        "base_seed": seed, "depth": depth, "lambda": lam, "epochs": epochs, "batch_size": batch_size,
        "lr": lr, "repeats": repeats, "top_k": top_k, "data_dir": data_dir,
        "methods": [m.strip() for m in methods.split(",")] if methods else None,
    }
    try:
        spec = parse_config(config_path, overrides)
        result = run_bench(spec, threads=threads,
                           progress=lambda r: click.echo(
                               f"{r.dataset:>20} {r.method:>6} seed={r.seed} auc={r.auc_cell}", err=True))
    except SoftTreeError as exc:
        _fail(exc)
    rows_path, md_path = result.write(out)
    click.echo(result.markdown(), nl=False)
    click.echo(f"wrote {rows_path} and {md_path}")


if __name__ == "__main__":
    main()
