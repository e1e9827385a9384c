"""Experiment pipelines behind the CLI commands.

Each runner takes an effective config dict and returns a metrics
document (plain dict, JSON-serializable). Runs are deterministic given
the config: every stochastic stage draws from generators derived from
the run seed, and multi-row commands derive one seed per row
(base seed + row index) so rows are independent.
"""

from __future__ import annotations

import time

import numpy as np

from . import __version__
from .autoencoder import AutoencoderSpec, build_autoencoder, extract_encoder, pretrain
from .baselines import ReferenceSet, classify_batch
from .classifier import ClassifierSpec, TrainedModel, assemble, evaluate, train
from .config import ConfigError
from .dataset import (
    Dataset,
    build_class_map,
    generate_synthetic,
    load_ujiindoorloc,
    split_train_validation,
)
from .evaluation import report_from_predictions
from .nn import Activation, TrainConfig
from .preprocess import MissingPolicy, ScalingMode, fit_scaler, substitute_missing, transform

#: Published row counts for the UJIIndoorLoc files; mismatches warn, not fail.
UJI_EXPECTED_ROWS = {"train": 19937, "test": 1111}


class StageError(RuntimeError):
    """Wraps a pipeline failure with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    """Context manager that tags failures and records wall-clock time."""

    def __init__(self, name: str, timings: dict):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = self.timings.get(self.name, 0.0) + (
            time.perf_counter() - self._t0
        )
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def _policy(cfg) -> MissingPolicy:
    return MissingPolicy(cfg["preprocess"]["missing_policy"])


def _scaling(cfg) -> ScalingMode:
    return ScalingMode(cfg["preprocess"]["scaling"])


def load_datasets(cfg, warnings: list) -> tuple:
    """(train_ds, test_ds) from UJI files or the synthetic stanza."""
    ds_cfg = cfg["dataset"]
    if ds_cfg["kind"] == "uji":
        if not ds_cfg["train_path"] or not ds_cfg["test_path"]:
            raise ConfigError("dataset.train_path and dataset.test_path are required for kind=uji")
        train_ds = load_ujiindoorloc(ds_cfg["train_path"], source_tag="uji_training")
        test_ds = load_ujiindoorloc(ds_cfg["test_path"], source_tag="uji_validation")
        if len(train_ds) != UJI_EXPECTED_ROWS["train"]:
            warnings.append(
                f"training file has {len(train_ds)} rows, expected {UJI_EXPECTED_ROWS['train']}"
            )
        if len(test_ds) != UJI_EXPECTED_ROWS["test"]:
            warnings.append(
                f"test file has {len(test_ds)} rows, expected {UJI_EXPECTED_ROWS['test']}"
            )
        return train_ds, test_ds
    full = generate_synthetic(
        num_records=ds_cfg["num_records"],
        num_aps=ds_cfg["num_aps"],
        num_classes=ds_cfg["num_classes"],
        seed=cfg["seed"],
        missing_fraction=ds_cfg["missing_fraction"],
    )
    train_ds, test_ds = split_train_validation(
        full, ds_cfg["test_fraction"], seed=cfg["seed"]
    )
    return train_ds, test_ds


def _fit_preprocessing(train_ds: Dataset, cfg):
    policy, mode = _policy(cfg), _scaling(cfg)
    filled = substitute_missing(train_ds.rss, policy)
    mask = None
    if not cfg["preprocess"]["include_missing_in_stats"]:
        mask = np.isnan(train_ds.rss)
    scaler = fit_scaler(filled, mode, policy, missing_mask=mask)
    return scaler


def _vectors(scaler, ds: Dataset) -> np.ndarray:
    return np.ascontiguousarray(
        transform(scaler, substitute_missing(ds.rss, scaler.policy))
    )


def _build_model(cfg, encoder_sizes, classifier_hidden, dropout, scaler, class_map,
                 train_x, train_y, val_xy, seed, timings, pretrain_history):
    """Pretrain (optionally), assemble, fine-tune. Returns a TrainedModel."""
    rng = np.random.default_rng(seed)
    activation = Activation(cfg["model"]["activation"])
    tr_cfg = cfg["training"]
    input_dim = train_x.shape[1]

    encoder = None
    if encoder_sizes:
        with _Stage("pretrain", timings):
            spec = AutoencoderSpec(input_dim, tuple(encoder_sizes), activation)
            auto = build_autoencoder(spec, rng)
            history = pretrain(
                auto,
                train_x,
                TrainConfig(
                    epochs=tr_cfg["pretrain_epochs"],
                    batch_size=tr_cfg["batch_size"],
                    learning_rate=tr_cfg["learning_rate"],
                ),
                rng,
            )
            pretrain_history.extend(history)
            encoder = extract_encoder(auto, spec)

    with _Stage("finetune", timings):
        head = ClassifierSpec(
            num_classes=len(class_map),
            hidden_sizes=tuple(classifier_hidden),
            dropout_rate=dropout,
        )
        net = assemble(encoder, head, rng, input_dim=input_dim,
                       hidden_activation=activation)
        epochs = tr_cfg["epochs"]
        patience = tr_cfg["patience"]
        model = train(
            net,
            (train_x, train_y),
            val_xy,
            TrainConfig(
                epochs=epochs,
                batch_size=tr_cfg["batch_size"],
                learning_rate=tr_cfg["learning_rate"],
                patience=patience if val_xy is not None else None,
            ),
            rng,
            scaler=scaler,
            class_map=class_map,
        )
    return model


def _selection_run(cfg, train_ds, test_ds, seed, timings, encoder_sizes=None,
                   classifier_hidden=None, dropout=None):
    """Split, preprocess, pretrain, fine-tune with validation selection."""
    model_cfg = cfg["model"]
    encoder_sizes = model_cfg["encoder_sizes"] if encoder_sizes is None else encoder_sizes
    classifier_hidden = (
        model_cfg["classifier_hidden"] if classifier_hidden is None else classifier_hidden
    )
    dropout = model_cfg["dropout"] if dropout is None else dropout

    with _Stage("split", timings):
        tr_ds, val_ds = split_train_validation(
            train_ds,
            cfg["split"]["validation_fraction"],
            seed=seed,
            stratify=cfg["split"]["stratify"],
        )
    with _Stage("preprocess", timings):
        class_map = build_class_map(train_ds)
        scaler = _fit_preprocessing(tr_ds, cfg)
        train_x = _vectors(scaler, tr_ds)
        val_x = _vectors(scaler, val_ds)
        train_y = class_map.class_indices(tr_ds)
        val_y = class_map.class_indices(val_ds)

    pre_history: list = []
    model = _build_model(
        cfg, encoder_sizes, classifier_hidden, dropout, scaler, class_map,
        train_x, train_y, (val_x, val_y), seed, timings, pre_history,
    )
    with _Stage("evaluate", timings):
        report = evaluate(model, test_ds)
    return model, report, pre_history


def _final_run(cfg, train_ds, test_ds, epochs, seed, timings):
    """Retrain on the merged training data for a fixed epoch budget."""
    with _Stage("preprocess", timings):
        class_map = build_class_map(train_ds)
        scaler = _fit_preprocessing(train_ds, cfg)
        x = _vectors(scaler, train_ds)
        y = class_map.class_indices(train_ds)

    final_cfg = {**cfg, "training": {**cfg["training"], "epochs": epochs}}
    pre_history: list = []
    model = _build_model(
        final_cfg, cfg["model"]["encoder_sizes"], cfg["model"]["classifier_hidden"],
        cfg["model"]["dropout"], scaler, class_map, x, y, None, seed, timings,
        pre_history,
    )
    with _Stage("evaluate", timings):
        report = evaluate(model, test_ds)
    return model, report, pre_history


def run_train(cfg) -> tuple:
    """Full protocol: selection run, then optional merged-data retraining.

    Returns (metrics dict, TrainedModel to persist).
    """
    timings: dict = {}
    warnings: list = []
    with _Stage("load", timings):
        train_ds, test_ds = load_datasets(cfg, warnings)

    model, report, pre_history = _selection_run(cfg, train_ds, test_ds, cfg["seed"], timings)
    selection = {
        "selected_epoch": model.selected_epoch,
        "best_val_accuracy": (
            max(model.history["val_accuracy"]) if model.history["val_accuracy"] else None
        ),
        "test_report": report.to_dict(),
        "history": {"pretrain_loss": pre_history, **model.history},
    }

    final = None
    if cfg["training"]["final_retrain"] and model.selected_epoch > 0:
        model_f, report_f, pre_f = _final_run(
            cfg, train_ds, test_ds, model.selected_epoch, cfg["seed"], timings
        )
        final = {"epochs": model.selected_epoch, "test_report": report_f.to_dict()}
        model, report = model_f, report_f
        history = {"pretrain_loss": pre_f, **model.history}
    else:
        history = selection["history"]

    metrics = {
        "artifact_version": __version__,
        "command": "train",
        "config": cfg,
        "warnings": warnings,
        "results": {
            "selection": selection,
            "final": final,
            "joint_accuracy": report.joint_accuracy,
            "building_accuracy": report.building_accuracy,
            "floor_accuracy_given_building": report.floor_accuracy_given_building,
            "n": report.n,
            "unmapped": report.unmapped,
        },
        "history": history,
        "timings": timings,
    }
    return metrics, model


ABLATION_GRID = (
    ("as100", "independent"),
    ("minus110", "independent"),
    ("as100", "joint"),
    ("minus110", "joint"),
)


def run_ablation(cfg) -> dict:
    """Missing-policy x scaling grid with the configured architecture."""
    timings: dict = {}
    warnings: list = []
    with _Stage("load", timings):
        train_ds, test_ds = load_datasets(cfg, warnings)

    rows = []
    for i, (policy, scaling) in enumerate(ABLATION_GRID):
        row_cfg = {
            **cfg,
            "preprocess": {**cfg["preprocess"], "missing_policy": policy, "scaling": scaling},
            "training": {**cfg["training"], "final_retrain": False},
        }
        model, report, _ = _selection_run(
            row_cfg, train_ds, test_ds, cfg["seed"] + i, timings
        )
        rows.append({
            "missing_policy": policy,
            "scaling": scaling,
            "seed": cfg["seed"] + i,
            "selected_epoch": model.selected_epoch,
            "validation_accuracy": (
                max(model.history["val_accuracy"]) if model.history["val_accuracy"] else None
            ),
            "test_accuracy": report.joint_accuracy,
        })

    return {
        "artifact_version": __version__,
        "command": "ablation",
        "config": cfg,
        "warnings": warnings,
        "results": {"rows": rows},
        "timings": timings,
    }


def run_sweep(cfg) -> dict:
    """One selection run per architecture entry; rows sorted by test accuracy."""
    entries = cfg["sweep"]["architectures"]
    if not entries:
        raise ConfigError("sweep.architectures must be non-empty")
    timings: dict = {}
    warnings: list = []
    with _Stage("load", timings):
        train_ds, test_ds = load_datasets(cfg, warnings)

    rows = []
    for i, entry in enumerate(entries):
        name = entry.get("name") or f"arch-{i}"
        model, report, _ = _selection_run(
            cfg, train_ds, test_ds, cfg["seed"] + i, timings,
            encoder_sizes=list(entry.get("encoder_sizes", [])),
            classifier_hidden=list(entry.get("classifier_hidden",
                                             cfg["model"]["classifier_hidden"])),
            dropout=entry.get("dropout", cfg["model"]["dropout"]),
        )
        rows.append({
            "name": name,
            "encoder_sizes": list(entry.get("encoder_sizes", [])),
            "classifier_hidden": list(entry.get("classifier_hidden",
                                                cfg["model"]["classifier_hidden"])),
            "seed": cfg["seed"] + i,
            "selected_epoch": model.selected_epoch,
            "validation_accuracy": (
                max(model.history["val_accuracy"]) if model.history["val_accuracy"] else None
            ),
            "test_accuracy": report.joint_accuracy,
        })
    rows.sort(key=lambda r: -r["test_accuracy"])

    return {
        "artifact_version": __version__,
        "command": "sweep",
        "config": cfg,
        "warnings": warnings,
        "results": {"rows": rows},
        "timings": timings,
    }


def run_baselines(cfg) -> dict:
    """Nearest scan plus kNN/weighted-kNN over the configured k grid."""
    timings: dict = {}
    warnings: list = []
    with _Stage("load", timings):
        train_ds, test_ds = load_datasets(cfg, warnings)

    with _Stage("preprocess", timings):
        class_map = build_class_map(train_ds)
        scaler = _fit_preprocessing(train_ds, cfg)
        ref = ReferenceSet(_vectors(scaler, train_ds), class_map.class_indices(train_ds))
        queries = _vectors(scaler, test_ds)
        true_pairs = test_ds.pairs()

    rows = []
    with _Stage("classify", timings):
        preds = classify_batch(ref, queries, "nearest")
        report = report_from_predictions(true_pairs, preds, class_map)
        rows.append({"method": "nearest", "k": 1, "report": report.to_dict()})
        for k in cfg["baselines"]["k_grid"]:
            for method in ("knn", "wknn"):
                preds = classify_batch(ref, queries, method, k=k)
                report = report_from_predictions(true_pairs, preds, class_map)
                rows.append({"method": method, "k": int(k), "report": report.to_dict()})

    return {
        "artifact_version": __version__,
        "command": "baselines",
        "config": cfg,
        "warnings": warnings,
        "results": {"rows": rows},
        "timings": timings,
    }


def run_evaluate(bundle_dir, data_path, cfg) -> dict:
    """Evaluate a persisted model bundle on a dataset file."""
    from .classifier import load_model

    timings: dict = {}
    with _Stage("load", timings):
        model = load_model(bundle_dir)
        test_ds = load_ujiindoorloc(data_path, source_tag="uji_validation")
    with _Stage("evaluate", timings):
        report = evaluate(model, test_ds)
    return {
        "artifact_version": __version__,
        "command": "evaluate",
        "config": cfg,
        "warnings": [],
        "results": report.to_dict(),
        "timings": timings,
    }
