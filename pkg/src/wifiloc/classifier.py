"""Encoder + classifier assembly, supervised fine-tuning, evaluation.

Fine-tuning updates every weight, encoder included. Model selection is
validation-based: train up to the epoch budget, snapshot the parameters
whenever validation joint accuracy improves, optionally stop early
after ``patience`` epochs without improvement, and restore the best
snapshot at the end.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .dataset import ClassMap, Dataset
from .evaluation import EvalReport, report_from_predictions
from .preprocess import ScalerParams, load_scaler, save_scaler, substitute_missing, transform
from .nn import (
    Activation,
    AdamState,
    Network,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_dense,
    iterate_minibatches,
    load_network,
    save_network,
    softmax_cross_entropy,
)

_EVAL_CHUNK = 4096


@dataclass(frozen=True)
class ClassifierSpec:
    """Classifier head: hidden widths, dropout between them, class count."""

    num_classes: int
    hidden_sizes: tuple = (128, 128)
    dropout_rate: float = 0.10

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(s) for s in self.hidden_sizes))
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if any(s < 1 for s in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")


def assemble(
    encoder,
    spec: ClassifierSpec,
    rng,
    input_dim: int = None,
    hidden_activation: Activation = Activation.RELU,
) -> Network:
    """Chain pretrained encoder layers with a fresh classifier head.

    Encoder weights are copied bitwise; head layers are freshly
    initialized with dropout at the gaps following each head hidden
    layer. ``encoder=None`` builds a plain dropout network from
    ``input_dim`` (the no-autoencoder variants).
    """
    if encoder is None:
        if input_dim is None:
            raise ValueError("input_dim is required when no encoder is given")
        layers = []
        rates = []
        width = input_dim
    else:
        layers = [l.copy() for l in encoder.layers]
        rates = [0.0] * len(layers)  # no dropout inside or right after the encoder
        width = encoder.output_dim

    for size in spec.hidden_sizes:
        layers.append(init_dense(width, size, Activation(hidden_activation), rng))
        rates.append(spec.dropout_rate)  # gap following this hidden layer
        width = size
    layers.append(init_dense(width, spec.num_classes, Activation.SOFTMAX, rng))
    return Network(layers, rates)


@dataclass
class TrainedModel:
    """A fine-tuned network plus everything needed to serve raw scans."""

    network: Network
    scaler: ScalerParams
    class_map: ClassMap
    history: dict
    selected_epoch: int  # 1-based; 0 means the initialization was kept

    def __post_init__(self):
        if self.class_map is not None and self.network.output_dim != len(self.class_map):
            raise ValueError("network output width must equal the class-map size")
        if self.scaler is not None and self.scaler.n_features != self.network.input_dim:
            raise ValueError("scaler arity must match the network input width")


def _class_accuracy(net: Network, x, y) -> float:
    hits = 0
    for start in range(0, x.shape[0], _EVAL_CHUNK):
        chunk = x[start:start + _EVAL_CHUNK]
        out = forward(net, chunk).output
        hits += int((np.argmax(out, axis=1) == y[start:start + chunk.shape[0]]).sum())
    return hits / x.shape[0]


def train(
    net: Network,
    train_data,
    val_data,
    cfg: TrainConfig,
    rng,
    scaler: ScalerParams = None,
    class_map: ClassMap = None,
) -> TrainedModel:
    """Mini-batch Adam on softmax cross-entropy with model selection.

    ``train_data``/``val_data`` are (vectors, labels) of already
    preprocessed inputs. ``val_data=None`` disables selection (the final
    epoch's parameters are kept) - used for the merged final retraining.
    """
    x_tr, y_tr = train_data
    x_tr = np.ascontiguousarray(x_tr, dtype=np.float64)
    y_tr = np.ascontiguousarray(y_tr, dtype=np.int64)
    if x_tr.shape[0] == 0:
        raise ValueError("empty training set")
    if x_tr.shape[1] != net.input_dim:
        raise ValueError("training vectors do not match the network input width")
    if y_tr.min(initial=0) < 0 or y_tr.max(initial=0) >= net.output_dim:
        raise ValueError("training label outside the class range")
    if val_data is not None:
        x_val, y_val = val_data
        x_val = np.ascontiguousarray(x_val, dtype=np.float64)
        y_val = np.ascontiguousarray(y_val, dtype=np.int64)
        if y_val.size and (y_val.min() < 0 or y_val.max() >= net.output_dim):
            raise ValueError("validation label outside the class range")

    params = net.parameters()
    state = AdamState.for_params(params, learning_rate=cfg.learning_rate)
    history = {"train_loss": [], "val_accuracy": []}
    best_snapshot = [p.copy() for p in params]
    best_acc = -np.inf
    best_epoch = 0
    since_best = 0
    n = x_tr.shape[0]

    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for idx in iterate_minibatches(n, cfg.batch_size, rng):
            xb = np.ascontiguousarray(x_tr[idx])
            trace = forward(net, xb, train=True, rng=rng)
            loss, grad = softmax_cross_entropy(trace.pre_activations[-1], y_tr[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}: loss {loss}")
            grads = backward(net, trace, grad, logits_grad=True)
            adam_step(params, grads, state)
            total += loss * len(idx)
        history["train_loss"].append(total / n)

        if val_data is not None:
            acc = _class_accuracy(net, x_val, y_val)
            history["val_accuracy"].append(acc)
            if acc > best_acc:
                best_acc = acc
                best_epoch = epoch
                best_snapshot = [p.copy() for p in params]
                since_best = 0
            else:
                since_best += 1
                if cfg.patience is not None and since_best >= cfg.patience:
                    break
        else:
            best_epoch = epoch
            best_snapshot = [p.copy() for p in params]

    for p, s in zip(params, best_snapshot):
        p[...] = s
    return TrainedModel(net, scaler, class_map, history, best_epoch)


def _preprocess_rss(model: TrainedModel, rss_matrix) -> np.ndarray:
    filled = substitute_missing(rss_matrix, model.scaler.policy)
    return np.ascontiguousarray(transform(model.scaler, filled))


def predict(model: TrainedModel, rss) -> tuple:
    """Class probabilities and the argmax (building, floor) for one raw scan."""
    if model.scaler is None or model.class_map is None:
        raise ValueError("model carries no scaler/class map; cannot serve raw scans")
    scan = np.asarray(rss, dtype=np.float64)
    if scan.shape != (model.network.input_dim,):
        raise ValueError(
            f"scan arity {scan.shape} does not match the model input {model.network.input_dim}"
        )
    x = _preprocess_rss(model, scan[None, :])
    probs = forward(model.network, x).output[0]
    # lowest index wins ties (np.argmax returns the first maximum)
    return probs, model.class_map.pair_at(int(np.argmax(probs)))


def evaluate(model: TrainedModel, test: Dataset) -> EvalReport:
    """Deterministic joint/building/floor accuracy over a test dataset."""
    if len(test) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if test.num_aps != model.network.input_dim:
        raise ValueError("test RSS arity does not match the model input")
    x = _preprocess_rss(model, test.rss)
    preds = np.empty(len(test), dtype=np.int64)
    for start in range(0, x.shape[0], _EVAL_CHUNK):
        out = forward(model.network, x[start:start + _EVAL_CHUNK]).output
        preds[start:start + out.shape[0]] = np.argmax(out, axis=1)
    return report_from_predictions(test.pairs(), preds, model.class_map)


def save_model(model: TrainedModel, bundle_dir) -> None:
    """Persist network, scaler, class map, and history under one directory."""
    os.makedirs(bundle_dir, exist_ok=True)
    save_network(model.network, os.path.join(bundle_dir, "network.npz"))
    save_scaler(model.scaler, os.path.join(bundle_dir, "scaler.txt"))
    with open(os.path.join(bundle_dir, "class_map.txt"), "w") as fh:
        fh.write(model.class_map.to_lines())
    with open(os.path.join(bundle_dir, "history.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_accuracy"])
        val = model.history.get("val_accuracy", [])
        for i, loss in enumerate(model.history.get("train_loss", [])):
            writer.writerow([i + 1, f"{loss:.17g}", f"{val[i]:.17g}" if i < len(val) else ""])
    manifest = {
        "format": "wifiloc-model-bundle",
        "version": 1,
        "files": {
            "network": "network.npz",
            "scaler": "scaler.txt",
            "class_map": "class_map.txt",
            "history": "history.csv",
        },
        "selected_epoch": model.selected_epoch,
    }
    with open(os.path.join(bundle_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(bundle_dir) -> TrainedModel:
    with open(os.path.join(bundle_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "wifiloc-model-bundle" or manifest.get("version") != 1:
        raise ValueError(f"{bundle_dir}: not a version-1 model bundle")
    files = manifest["files"]
    network = load_network(os.path.join(bundle_dir, files["network"]))
    scaler = load_scaler(os.path.join(bundle_dir, files["scaler"]))
    with open(os.path.join(bundle_dir, files["class_map"])) as fh:
        class_map = ClassMap.from_lines(fh.read())
    history = {"train_loss": [], "val_accuracy": []}
    with open(os.path.join(bundle_dir, files["history"]), newline="") as fh:
        for row in csv.DictReader(fh):
            history["train_loss"].append(float(row["train_loss"]))
            if row["val_accuracy"]:
                history["val_accuracy"].append(float(row["val_accuracy"]))
    return TrainedModel(network, scaler, class_map, history, int(manifest["selected_epoch"]))
