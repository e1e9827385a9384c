"""Missing-signal substitution and zero-mean unit-variance scaling.

The pipeline order is fixed: substitution first, then fitting/transform
on the substituted values. ``fit_scaler`` refuses input containing the
MISSING sentinel, so fitting on pre-substitution data cannot happen.
Substituted sentinel values count toward the statistics by default; an
explicit mask can exclude them for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class MissingPolicy(Enum):
    """What value stands in for an unobserved access point."""

    AS_100 = "as100"
    AS_MINUS_110 = "minus110"

    @property
    def fill_value(self) -> float:
        return 100.0 if self is MissingPolicy.AS_100 else -110.0


class ScalingMode(Enum):
    JOINT = "joint"            # one mean/std over every entry
    INDEPENDENT = "independent"  # per-access-point mean/std


@dataclass(frozen=True)
class ScalerParams:
    """Fitted preprocessing state; immutable and serializable."""

    policy: MissingPolicy
    mode: ScalingMode
    means: object  # float for JOINT, (n_features,) ndarray for INDEPENDENT
    stds: object   # same shape as means, strictly positive
    n_features: int

    def __post_init__(self):
        if self.mode is ScalingMode.JOINT:
            if not np.isscalar(self.means) or not np.isscalar(self.stds):
                raise ValueError("JOINT scaling stores scalar statistics")
            if not self.stds > 0:
                raise ValueError("std must be strictly positive")
        else:
            means = np.asarray(self.means)
            stds = np.asarray(self.stds)
            if means.shape != (self.n_features,) or stds.shape != (self.n_features,):
                raise ValueError("INDEPENDENT scaling stores per-feature statistics")
            if not (stds > 0).all():
                raise ValueError("stds must be strictly positive")


def substitute_missing(rss, policy: MissingPolicy) -> np.ndarray:
    """Replace MISSING entries by the policy value; others unchanged.

    Accepts a single scan (d,) or a matrix (n, d); always returns a new
    float64 array.
    """
    out = np.array(rss, dtype=np.float64, copy=True)
    out[np.isnan(out)] = policy.fill_value
    return out


def fit_scaler(
    train_vectors,
    mode: ScalingMode,
    policy: MissingPolicy,
    missing_mask=None,
) -> ScalerParams:
    """Fit standardization statistics on substituted training vectors.

    Statistics are population (1/n) moments. Zero-variance features
    (access points constant in training, typically never observed) get
    std clamped to 1 so they map to a constant. ``missing_mask`` marks
    entries that were MISSING before substitution; when given, those
    entries are excluded from the statistics (ablation switch).
    """
    x = np.asarray(train_vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a matrix of scans (n, num_aps)")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training vectors to fit a scaler")
    if np.isnan(x).any():
        raise ValueError("input still contains MISSING entries; run substitute_missing first")

    if missing_mask is not None:
        mask = np.asarray(missing_mask, dtype=bool)
        if mask.shape != x.shape:
            raise ValueError("missing_mask shape does not match the data")
        x = np.ma.masked_array(x, mask=mask)

    if mode is ScalingMode.JOINT:
        mean = x.mean()
        std = x.std()
        mean = 0.0 if mean is np.ma.masked else float(mean)
        std = 0.0 if std is np.ma.masked else float(std)
        if std == 0.0 or not np.isfinite(std):
            std = 1.0
        return ScalerParams(policy, mode, mean, std, n_features=int(x.shape[1]))

    # filled() handles features whose every entry was mask-excluded
    means = np.ma.filled(x.mean(axis=0), 0.0).astype(np.float64)
    stds = np.ma.filled(x.std(axis=0), 0.0).astype(np.float64)
    means = np.where(np.isfinite(means), means, 0.0)
    stds = np.where((stds == 0.0) | ~np.isfinite(stds), 1.0, stds)
    return ScalerParams(policy, mode, means, stds, n_features=int(x.shape[1]))


def transform(scaler: ScalerParams, vectors) -> np.ndarray:
    """Standardize substituted vectors: (x - mean) / std.

    Accepts a single scan (d,) or a matrix (n, d).
    """
    x = np.asarray(vectors, dtype=np.float64)
    width = x.shape[-1] if x.ndim in (1, 2) else -1
    if width != scaler.n_features:
        raise ValueError(
            f"vector arity {width} does not match fitted arity {scaler.n_features}"
        )
    return (x - scaler.means) / scaler.stds


def save_scaler(scaler: ScalerParams, path) -> None:
    """Persist as a plain-text key-value document (round-trip exact)."""
    def fmt(v):
        a = np.atleast_1d(np.asarray(v, dtype=np.float64))
        return " ".join(f"{e:.17g}" for e in a)

    with open(path, "w") as fh:
        fh.write("wifiloc-scaler v1\n")
        fh.write(f"policy: {scaler.policy.value}\n")
        fh.write(f"mode: {scaler.mode.value}\n")
        fh.write(f"n_features: {scaler.n_features}\n")
        fh.write(f"means: {fmt(scaler.means)}\n")
        fh.write(f"stds: {fmt(scaler.stds)}\n")


def load_scaler(path) -> ScalerParams:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "wifiloc-scaler v1":
        raise ValueError(f"{path}: not a scaler document")
    fields = {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        key, _, value = ln.partition(":")
        fields[key.strip()] = value.strip()
    policy = MissingPolicy(fields["policy"])
    mode = ScalingMode(fields["mode"])
    n_features = int(fields["n_features"])
    means = np.array([float(t) for t in fields["means"].split()], dtype=np.float64)
    stds = np.array([float(t) for t in fields["stds"].split()], dtype=np.float64)
    if mode is ScalingMode.JOINT:
        return ScalerParams(policy, mode, float(means[0]), float(stds[0]), n_features)
    return ScalerParams(policy, mode, means, stds, n_features)
