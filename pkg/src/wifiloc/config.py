"""Experiment configuration: defaults, YAML files, environment overrides.

Every field has a default, so a run needs nothing beyond dataset paths.
Precedence, lowest to highest: built-in defaults, config file,
``WIFILOC_<SECTION>__<KEY>`` environment variables, CLI flags. The full
effective config is echoed into every metrics document so any result
reproduces from its own output.
"""

from __future__ import annotations

import copy
import os

import yaml

ENV_PREFIX = "WIFILOC_"

DEFAULTS = {
    "seed": 42,
    "out": "runs",
    "dataset": {
        "kind": "uji",            # "uji" or "synthetic"
        "train_path": None,
        "test_path": None,
        "num_records": 2000,      # synthetic stanza
        "num_aps": 64,
        "num_classes": 8,
        "missing_fraction": 0.3,
        "test_fraction": 0.2,
    },
    "split": {
        "validation_fraction": 0.1,
        "stratify": False,
    },
    "preprocess": {
        "missing_policy": "minus110",   # "as100" or "minus110"
        "scaling": "joint",             # "joint" or "independent"
        "include_missing_in_stats": True,
    },
    "model": {
        "encoder_sizes": [256, 128, 64],   # [] disables the autoencoder
        "classifier_hidden": [128, 128],
        "dropout": 0.10,
        "activation": "relu",              # hidden activation, "relu" or "tanh"
        "pretrain_strategy": "end_to_end",
    },
    "training": {
        "pretrain_epochs": 20,
        "epochs": 100,
        "batch_size": 64,
        "learning_rate": 0.001,
        "patience": 15,
        "final_retrain": True,
    },
    "sweep": {
        # each entry: {name, encoder_sizes, classifier_hidden, dropout?}
        "architectures": [
            {"name": "sae-256-128-64", "encoder_sizes": [256, 128, 64],
             "classifier_hidden": [128, 128]},
            {"name": "plain-128-128", "encoder_sizes": [],
             "classifier_hidden": [128, 128]},
            {"name": "plain-256-128", "encoder_sizes": [],
             "classifier_hidden": [256, 128]},
        ],
    },
    "baselines": {
        "k_grid": [1, 3, 5, 7],
    },
}


class ConfigError(ValueError):
    """Raised on unknown keys or unusable values."""


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and key != "sweep":
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping")
            out[key] = _merge(base[key], value, where)
        elif key == "sweep":
            if not isinstance(value, dict) or set(value) - {"architectures"}:
                raise ConfigError(f"{where} holds only 'architectures'")
            out[key] = copy.deepcopy(value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None, env=None, overrides=None) -> dict:
    """Materialize the effective config.

    ``env`` defaults to os.environ; ``overrides`` is a flat dict of
    top-level keys (CLI flags), applied last.
    """
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        cfg = _merge(cfg, loaded)
    cfg = _apply_env(cfg, os.environ if env is None else env)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in cfg:
            raise ConfigError(f"unknown config key: {key}")
        cfg[key] = value
    _validate(cfg)
    return cfg


def _apply_env(cfg: dict, env) -> dict:
    cfg = copy.deepcopy(cfg)
    for name, raw in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        tail = name[len(ENV_PREFIX):]
        if tail in ("BACKEND", "UJI_DIR"):  # runtime switches, not config keys
            continue
        parts = [p.lower() for p in tail.split("__")]
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {name}: {exc}") from exc
        node = cfg
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key from {name}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key from {name}")
        node[parts[-1]] = value
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["dataset"]["kind"] not in ("uji", "synthetic"):
        raise ConfigError("dataset.kind must be 'uji' or 'synthetic'")
    if cfg["preprocess"]["missing_policy"] not in ("as100", "minus110"):
        raise ConfigError("preprocess.missing_policy must be 'as100' or 'minus110'")
    if cfg["preprocess"]["scaling"] not in ("joint", "independent"):
        raise ConfigError("preprocess.scaling must be 'joint' or 'independent'")
    if cfg["model"]["activation"] not in ("relu", "tanh"):
        raise ConfigError("model.activation must be 'relu' or 'tanh'")
    if cfg["model"]["pretrain_strategy"] != "end_to_end":
        raise ConfigError("only the end_to_end pretraining strategy is implemented")
