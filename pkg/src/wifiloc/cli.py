"""Command-line experiment harness.

Every command materializes its effective config into the metrics
document it writes, so results reproduce from their own output. Outputs
land in a fresh run directory under --out; a failed run's partial
output is moved to ``<out>/quarantine/`` and never overwrites previous
results.
"""

from __future__ import annotations

import json
import os
import shutil
import sys

import click

from . import __version__, experiments
from .config import ConfigError, load_config
from .dataset import generate_synthetic, split_train_validation, write_ujiindoorloc


def _fresh_run_dir(out_root: str, name: str) -> str:
    os.makedirs(out_root, exist_ok=True)
    candidate = os.path.join(out_root, name)
    counter = 2
    while os.path.exists(candidate):
        candidate = os.path.join(out_root, f"{name}-{counter}")
        counter += 1
    return candidate


def _quarantine(partial_dir: str, out_root: str) -> str:
    qroot = os.path.join(out_root, "quarantine")
    os.makedirs(qroot, exist_ok=True)
    target = _fresh_run_dir(qroot, os.path.basename(partial_dir).lstrip("."))
    shutil.move(partial_dir, target)
    return target


def _write_metrics(run_dir: str, metrics: dict) -> str:
    path = os.path.join(run_dir, "metrics.json")
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _print_table(rows, columns):
    widths = [max(len(str(c)), max((len(str(r[c])) for r in rows), default=0)) for c in columns]
    header = "  ".join(str(c).ljust(w) for c, w in zip(columns, widths))
    click.echo(header)
    click.echo("-" * len(header))
    for r in rows:
        click.echo("  ".join(str(r[c]).ljust(w) for c, w in zip(columns, widths)))


def _run_command(name, cfg, runner, persist=None):
    """Execute a runner inside a fresh run directory with quarantine on failure."""
    out_root = cfg["out"]
    run_dir = _fresh_run_dir(out_root, f"{name}-seed{cfg['seed']}")
    partial = os.path.join(out_root, "." + os.path.basename(run_dir) + ".partial")
    os.makedirs(partial)
    try:
        result = runner()
        if persist is not None:
            persist(partial, result)
        metrics = result[0] if isinstance(result, tuple) else result
        _write_metrics(partial, metrics)
        os.replace(partial, run_dir)
    except experiments.StageError as exc:
        moved = _quarantine(partial, out_root)
        click.echo(f"error: {exc} (partial output in {moved})", err=True)
        sys.exit(1)
    except Exception as exc:
        moved = _quarantine(partial, out_root)
        click.echo(f"error: {exc} (partial output in {moved})", err=True)
        sys.exit(1)
    for w in metrics.get("warnings", []):
        click.echo(f"warning: {w}", err=True)
    return run_dir, metrics


_config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="YAML config file; omitted fields use defaults.",
)
_seed_option = click.option("--seed", type=int, default=None, help="Run seed override.")
_out_option = click.option("--out", type=str, default=None, help="Output root directory.")


@click.group()
@click.version_option(version=__version__, prog_name="wifiloc")
def main():
    """WiFi fingerprint place recognition experiments."""


def _load(config_path, seed, out):
    try:
        return load_config(config_path, overrides={"seed": seed, "out": out})
    except (ConfigError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@main.command()
@_config_option
@_seed_option
@_out_option
def train(config_path, seed, out):
    """Pretrain, fine-tune, and evaluate the configured model."""
    cfg = _load(config_path, seed, out)

    def persist(run_dir, result):
        from .classifier import save_model

        save_model(result[1], os.path.join(run_dir, "model"))

    run_dir, metrics = _run_command("train", cfg, lambda: experiments.run_train(cfg), persist)
    res = metrics["results"]
    click.echo(f"test joint accuracy:      {res['joint_accuracy']:.4f}")
    click.echo(f"building accuracy:        {res['building_accuracy']:.4f}")
    click.echo(f"floor acc given building: {res['floor_accuracy_given_building']:.4f}")
    sel = res["selection"]
    if sel["best_val_accuracy"] is not None:
        click.echo(f"selected epoch {sel['selected_epoch']} "
                   f"(validation accuracy {sel['best_val_accuracy']:.4f})")
    click.echo(f"run directory: {run_dir}")


@main.command()
@_config_option
@_seed_option
@_out_option
def ablation(config_path, seed, out):
    """Missing-value policy x scaling-mode grid (4 rows)."""
    cfg = _load(config_path, seed, out)
    run_dir, metrics = _run_command("ablation", cfg, lambda: experiments.run_ablation(cfg))
    rows = [
        {
            "missing": r["missing_policy"],
            "scaling": r["scaling"],
            "validation": f"{r['validation_accuracy']:.3f}",
            "test": f"{r['test_accuracy']:.3f}",
        }
        for r in metrics["results"]["rows"]
    ]
    _print_table(rows, ["missing", "scaling", "validation", "test"])
    click.echo(f"run directory: {run_dir}")


@main.command()
@_config_option
@_seed_option
@_out_option
def sweep(config_path, seed, out):
    """Train each configured architecture; report sorted by test accuracy."""
    cfg = _load(config_path, seed, out)

    def persist(run_dir, result):
        path = os.path.join(run_dir, "sweep.csv")
        with open(path, "w") as fh:
            fh.write("name,validation_accuracy,test_accuracy\n")
            for r in result["results"]["rows"]:
                fh.write(f"{r['name']},{r['validation_accuracy']:.17g},"
                         f"{r['test_accuracy']:.17g}\n")

    run_dir, metrics = _run_command("sweep", cfg, lambda: experiments.run_sweep(cfg), persist)
    rows = [
        {
            "architecture": r["name"],
            "validation": f"{r['validation_accuracy']:.3f}",
            "test": f"{r['test_accuracy']:.3f}",
        }
        for r in metrics["results"]["rows"]
    ]
    _print_table(rows, ["architecture", "validation", "test"])
    click.echo(f"run directory: {run_dir}")


@main.command()
@_config_option
@_seed_option
@_out_option
def baselines(config_path, seed, out):
    """Nearest-scan, kNN, and weighted-kNN reference results."""
    cfg = _load(config_path, seed, out)
    run_dir, metrics = _run_command("baselines", cfg, lambda: experiments.run_baselines(cfg))
    rows = [
        {
            "method": r["method"],
            "k": r["k"],
            "joint": f"{r['report']['joint_accuracy']:.4f}",
            "building": f"{r['report']['building_accuracy']:.4f}",
        }
        for r in metrics["results"]["rows"]
    ]
    _print_table(rows, ["method", "k", "joint", "building"])
    click.echo(f"run directory: {run_dir}")


@main.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Dataset file to evaluate against.")
@_config_option
@_seed_option
@_out_option
def evaluate(bundle, data_path, config_path, seed, out):
    """Evaluate a persisted model bundle on a dataset file."""
    cfg = _load(config_path, seed, out)
    run_dir, metrics = _run_command(
        "evaluate", cfg, lambda: experiments.run_evaluate(bundle, data_path, cfg)
    )
    res = metrics["results"]
    click.echo(f"test joint accuracy:      {res['joint_accuracy']:.4f}")
    click.echo(f"building accuracy:        {res['building_accuracy']:.4f}")
    click.echo(f"floor acc given building: {res['floor_accuracy_given_building']:.4f}")
    click.echo(f"run directory: {run_dir}")


@main.command()
@click.option("--num-records", type=int, default=2000, show_default=True)
@click.option("--num-aps", type=int, default=64, show_default=True)
@click.option("--num-classes", type=int, default=8, show_default=True)
@click.option("--missing-fraction", type=float, default=0.3, show_default=True)
@click.option("--test-fraction", type=float, default=0.2, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="synthetic-data",
              show_default=True)
def synth(num_records, num_aps, num_classes, missing_fraction, test_fraction, seed, out):
    """Generate a synthetic fixture dataset in the UJIIndoorLoc file format."""
    try:
        full = generate_synthetic(
            num_records, num_aps, num_classes, seed, missing_fraction=missing_fraction
        )
        train_ds, test_ds = split_train_validation(full, test_fraction, seed=seed)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    os.makedirs(out, exist_ok=True)
    train_path = os.path.join(out, "train.csv")
    test_path = os.path.join(out, "test.csv")
    write_ujiindoorloc(train_ds, train_path)
    write_ujiindoorloc(test_ds, test_path)
    click.echo(f"wrote {len(train_ds)} records to {train_path}")
    click.echo(f"wrote {len(test_ds)} records to {test_path}")


if __name__ == "__main__":
    main()
