"""UJIIndoorLoc ingestion, class space, splits, and synthetic fixtures.

A scan is 520 received-signal-strength slots (one per access point) plus
location labels and capture metadata. The raw files encode "access point
not observed" as the value 100; records here carry NaN for that sentinel
so downstream code can never mistake it for a measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import pandas as pd

#: Sentinel for an access point that was not observed in a scan.
MISSING = float("nan")

METADATA_COLUMNS = (
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
)

SOURCE_TAGS = ("uji_training", "uji_validation", "derived_split", "synthetic")

_RAW_MISSING = 100.0
_RSS_MIN, _RSS_MAX = -110.0, 0.0


class IngestionError(ValueError):
    """Raised when a fingerprint file cannot be parsed."""


def is_missing(values) -> np.ndarray:
    """Elementwise test for the MISSING sentinel."""
    return np.isnan(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True)
class FingerprintRecord:
    """One WiFi scan: RSS per access point plus labels and metadata."""

    rss: np.ndarray  # (num_aps,) float64, NaN marks MISSING
    longitude: float
    latitude: float
    floor: int
    building_id: int
    space_id: int
    relative_position: int
    user_id: int
    phone_id: int
    timestamp: int


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of fingerprint records, stored columnar.

    Immutable after construction; all mutating-style operations return a
    new Dataset. ``rss`` is (n, num_aps) float64 with NaN for MISSING.
    """

    rss: np.ndarray
    longitude: np.ndarray
    latitude: np.ndarray
    floor: np.ndarray
    building_id: np.ndarray
    space_id: np.ndarray
    relative_position: np.ndarray
    user_id: np.ndarray
    phone_id: np.ndarray
    timestamp: np.ndarray
    source_tag: str

    def __post_init__(self):
        n = self.rss.shape[0]
        for name in ("longitude", "latitude", "floor", "building_id", "space_id",
                     "relative_position", "user_id", "phone_id", "timestamp"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name!r} does not have {n} entries")
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(f"unknown source_tag {self.source_tag!r}")

    def __len__(self) -> int:
        return self.rss.shape[0]

    @property
    def num_aps(self) -> int:
        return self.rss.shape[1]

    def __getitem__(self, i: int) -> FingerprintRecord:
        return FingerprintRecord(
            rss=self.rss[i].copy(),
            longitude=float(self.longitude[i]),
            latitude=float(self.latitude[i]),
            floor=int(self.floor[i]),
            building_id=int(self.building_id[i]),
            space_id=int(self.space_id[i]),
            relative_position=int(self.relative_position[i]),
            user_id=int(self.user_id[i]),
            phone_id=int(self.phone_id[i]),
            timestamp=int(self.timestamp[i]),
        )

    @property
    def records(self) -> Iterator[FingerprintRecord]:
        return (self[i] for i in range(len(self)))

    def pairs(self) -> np.ndarray:
        """(n, 2) array of (building_id, floor) per record."""
        return np.stack([self.building_id, self.floor], axis=1)

    def subset(self, indices, source_tag: str = "derived_split") -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            rss=self.rss[idx].copy(),
            longitude=self.longitude[idx].copy(),
            latitude=self.latitude[idx].copy(),
            floor=self.floor[idx].copy(),
            building_id=self.building_id[idx].copy(),
            space_id=self.space_id[idx].copy(),
            relative_position=self.relative_position[idx].copy(),
            user_id=self.user_id[idx].copy(),
            phone_id=self.phone_id[idx].copy(),
            timestamp=self.timestamp[idx].copy(),
            source_tag=source_tag,
        )


class ClassMap:
    """Bijection between (building_id, floor) pairs and class indices.

    Pairs are ordered ascending by (building, floor) so indices are
    reproducible across runs.
    """

    def __init__(self, pairs):
        pairs = [(int(b), int(f)) for b, f in pairs]
        if sorted(pairs) != pairs:
            raise ValueError("class pairs must be sorted ascending")
        self._pairs = tuple(pairs)
        self._index = {p: i for i, p in enumerate(self._pairs)}
        if len(self._index) != len(self._pairs):
            raise ValueError("class pairs must be distinct")

    def __len__(self) -> int:
        return len(self._pairs)

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassMap) and self._pairs == other._pairs

    @property
    def pairs(self) -> tuple:
        return self._pairs

    def index_of(self, building_id: int, floor: int) -> int:
        return self._index[(int(building_id), int(floor))]

    def pair_at(self, index: int) -> tuple:
        return self._pairs[index]

    def __contains__(self, pair) -> bool:
        return (int(pair[0]), int(pair[1])) in self._index

    def class_indices(self, ds: Dataset) -> np.ndarray:
        """Class index per record; raises KeyError on an unmapped pair."""
        return np.array(
            [self.index_of(b, f) for b, f in zip(ds.building_id, ds.floor)],
            dtype=np.int64,
        )

    def to_lines(self) -> str:
        lines = ["wifiloc-classmap v1"]
        lines += [f"{b} {f}" for b, f in self._pairs]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_lines(cls, text: str) -> "ClassMap":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != "wifiloc-classmap v1":
            raise ValueError("not a class-map document")
        pairs = []
        for ln in lines[1:]:
            b, f = ln.split()
            pairs.append((int(b), int(f)))
        return cls(pairs)


def build_class_map(ds: Dataset) -> ClassMap:
    """Class space covering exactly the distinct (building, floor) pairs in ds."""
    if len(ds) == 0:
        raise ValueError("cannot build a class map from an empty dataset")
    pairs = sorted({(int(b), int(f)) for b, f in zip(ds.building_id, ds.floor)})
    return ClassMap(pairs)


def load_ujiindoorloc(path, source_tag: str = "uji_training") -> Dataset:
    """Load a UJIIndoorLoc-format CSV.

    Expects a header row naming WAP001..WAPnnn columns followed by the
    nine metadata columns. RSS cells equal to 100 become MISSING; any
    other numeric cell is taken as dBm and must lie in [-110, 0].
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise IngestionError(f"fingerprint file not found: {path}") from exc
    except pd.errors.ParserError as exc:
        raise IngestionError(f"malformed fingerprint file {path}: {exc}") from exc

    wap_cols = [c for c in frame.columns if c.startswith("WAP")]
    if not wap_cols:
        raise IngestionError(f"{path}: no WAP columns in header")
    missing_meta = [c for c in METADATA_COLUMNS if c not in frame.columns]
    if missing_meta:
        raise IngestionError(f"{path}: missing metadata columns {missing_meta}")

    numeric = frame[wap_cols + list(METADATA_COLUMNS)].apply(
        pd.to_numeric, errors="coerce"
    )
    bad = numeric.isna().any(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        # +2: header line plus 1-based counting
        raise IngestionError(f"{path}: non-numeric or empty cell in data row {row + 1} (file line {row + 2})")

    rss = np.ascontiguousarray(numeric[wap_cols].to_numpy(dtype=np.float64))
    rss[rss == _RAW_MISSING] = MISSING
    observed = ~np.isnan(rss)
    out_of_range = observed & ((rss < _RSS_MIN) | (rss > _RSS_MAX))
    if out_of_range.any():
        row = int(np.flatnonzero(out_of_range.any(axis=1))[0])
        raise IngestionError(
            f"{path}: RSS value outside [{_RSS_MIN:g}, {_RSS_MAX:g}] dBm in data row {row + 1}"
        )

    floor = numeric["FLOOR"].to_numpy(dtype=np.int64)
    building = numeric["BUILDINGID"].to_numpy(dtype=np.int64)
    if (floor < 0).any() or (building < 0).any():
        row = int(np.flatnonzero((floor < 0) | (building < 0))[0])
        raise IngestionError(f"{path}: negative floor or building id in data row {row + 1}")

    return Dataset(
        rss=rss,
        longitude=numeric["LONGITUDE"].to_numpy(dtype=np.float64),
        latitude=numeric["LATITUDE"].to_numpy(dtype=np.float64),
        floor=floor,
        building_id=building,
        space_id=numeric["SPACEID"].to_numpy(dtype=np.int64),
        relative_position=numeric["RELATIVEPOSITION"].to_numpy(dtype=np.int64),
        user_id=numeric["USERID"].to_numpy(dtype=np.int64),
        phone_id=numeric["PHONEID"].to_numpy(dtype=np.int64),
        timestamp=numeric["TIMESTAMP"].to_numpy(dtype=np.int64),
        source_tag=source_tag,
    )


def write_ujiindoorloc(ds: Dataset, path) -> None:
    """Write a dataset back to the UJIIndoorLoc CSV format (MISSING -> 100)."""
    wap_cols = [f"WAP{i + 1:03d}" for i in range(ds.num_aps)]
    with open(path, "w") as fh:
        fh.write(",".join(wap_cols + list(METADATA_COLUMNS)) + "\n")
        rss = ds.rss
        for i in range(len(ds)):
            cells = [
                "100" if math.isnan(v) else f"{v:.17g}" for v in rss[i]
            ]
            cells += [
                f"{ds.longitude[i]:.17g}",
                f"{ds.latitude[i]:.17g}",
                str(int(ds.floor[i])),
                str(int(ds.building_id[i])),
                str(int(ds.space_id[i])),
                str(int(ds.relative_position[i])),
                str(int(ds.user_id[i])),
                str(int(ds.phone_id[i])),
                str(int(ds.timestamp[i])),
            ]
            fh.write(",".join(cells) + "\n")


def split_train_validation(
    ds: Dataset,
    validation_fraction: float,
    seed: int,
    stratify: bool = False,
) -> tuple[Dataset, Dataset]:
    """Random, exact partition into (train, validation).

    Validation gets floor(n * fraction), at least 1 record; training
    gets the rest. Record order within each part follows the input.
    With ``stratify`` the fraction is applied per (building, floor)
    group, floor-allocated with the remainder spread by largest
    fractional part.
    """
    n = len(ds)
    if n < 2:
        raise ValueError("need at least 2 records to split")
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError(f"validation fraction must be in (0, 1), got {validation_fraction}")
    rng = np.random.default_rng(seed)

    if not stratify:
        n_val = max(1, math.floor(n * validation_fraction))
        if n - n_val < 1:
            raise ValueError("validation fraction leaves no training records")
        perm = rng.permutation(n)
        val_idx = np.sort(perm[:n_val])
        train_idx = np.sort(perm[n_val:])
    else:
        val_parts = []
        pairs = list(zip(ds.building_id.tolist(), ds.floor.tolist()))
        groups = {}
        for i, p in enumerate(pairs):
            groups.setdefault(p, []).append(i)
        n_val_target = max(1, math.floor(n * validation_fraction))
        keys = sorted(groups)
        quotas = {k: len(groups[k]) * validation_fraction for k in keys}
        counts = {k: math.floor(quotas[k]) for k in keys}
        leftover = n_val_target - sum(counts.values())
        by_frac = sorted(keys, key=lambda k: (-(quotas[k] - counts[k]), k))
        for k in by_frac:
            if leftover <= 0:
                break
            if counts[k] < len(groups[k]):
                counts[k] += 1
                leftover -= 1
        for k in keys:
            members = np.array(groups[k], dtype=np.intp)
            perm = rng.permutation(len(members))
            val_parts.append(members[perm[: counts[k]]])
        val_idx = np.sort(np.concatenate(val_parts)) if val_parts else np.array([], np.intp)
        if len(val_idx) == 0 or n - len(val_idx) < 1:
            raise ValueError("stratified split left an empty part")
        mask = np.ones(n, dtype=bool)
        mask[val_idx] = False
        train_idx = np.flatnonzero(mask)

    return ds.subset(train_idx), ds.subset(val_idx)


def generate_synthetic(
    num_records: int,
    num_aps: int,
    num_classes: int,
    seed: int,
    missing_fraction: float = 0.3,
    noise_std: float = 5.0,
    center_range: tuple = (-90.0, -30.0),
) -> Dataset:
    """Deterministic synthetic dataset for fixture-scale testing.

    Each class gets Gaussian RSS cluster centers drawn uniformly in
    ``center_range`` dBm; per-record noise is ``noise_std`` dBm, values
    clipped to [-104, 0], then ``missing_fraction`` of entries masked.
    Record i belongs to class i mod num_classes, so every class appears.
    Classes map to (building, floor) as (c // 4, c % 4).
    """
    if num_records < 1 or num_aps < 1 or num_classes < 1:
        raise ValueError("num_records, num_aps, num_classes must all be >= 1")
    if num_records < num_classes:
        raise ValueError("need at least one record per class")
    if not 0.0 <= missing_fraction < 1.0:
        raise ValueError("missing_fraction must be in [0, 1)")

    rng = np.random.default_rng(seed)
    centers = rng.uniform(center_range[0], center_range[1], size=(num_classes, num_aps))
    pos_centers = rng.uniform(0.0, 100.0, size=(num_classes, 2))

    labels = np.arange(num_records, dtype=np.int64) % num_classes
    rss = centers[labels] + rng.normal(0.0, noise_std, size=(num_records, num_aps))
    np.clip(rss, -104.0, 0.0, out=rss)
    mask = rng.random((num_records, num_aps)) < missing_fraction
    rss[mask] = MISSING

    coords = pos_centers[labels] + rng.normal(0.0, 1.0, size=(num_records, 2))
    return Dataset(
        rss=np.ascontiguousarray(rss),
        longitude=coords[:, 0].copy(),
        latitude=coords[:, 1].copy(),
        floor=labels % 4,
        building_id=labels // 4,
        space_id=labels + 1,
        relative_position=np.ones(num_records, dtype=np.int64),
        user_id=np.zeros(num_records, dtype=np.int64),
        phone_id=np.zeros(num_records, dtype=np.int64),
        timestamp=np.arange(num_records, dtype=np.int64) + 1_400_000_000,
        source_tag="synthetic",
    )


def concatenate(a: Dataset, b: Dataset, source_tag: str = "derived_split") -> Dataset:
    """Concatenate two datasets with matching RSS arity."""
    if a.num_aps != b.num_aps:
        raise ValueError("datasets have different RSS arity")
    return Dataset(
        rss=np.ascontiguousarray(np.vstack([a.rss, b.rss])),
        longitude=np.concatenate([a.longitude, b.longitude]),
        latitude=np.concatenate([a.latitude, b.latitude]),
        floor=np.concatenate([a.floor, b.floor]),
        building_id=np.concatenate([a.building_id, b.building_id]),
        space_id=np.concatenate([a.space_id, b.space_id]),
        relative_position=np.concatenate([a.relative_position, b.relative_position]),
        user_id=np.concatenate([a.user_id, b.user_id]),
        phone_id=np.concatenate([a.phone_id, b.phone_id]),
        timestamp=np.concatenate([a.timestamp, b.timestamp]),
        source_tag=source_tag,
    )
