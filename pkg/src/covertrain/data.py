"""Datasets, index subsets, file I/O, and deterministic randomness.

Feature vectors are dense float64; labels are signed integers in {-1, +1}.
Instance order is stable: position i names the same instance for the whole
lifetime of a Dataset, so an index subset is a complete description of a
candidate training set.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

ROLES = ("camouflage_pool", "secret_set", "training_set", "test_set")

# Text precision for serialized floats; enough digits to round-trip float64.
FLOAT_FORMAT = "%.17g"


class DataError(ValueError):
    """Malformed dataset file or inconsistent dataset contents."""


@dataclass(frozen=True)
class LabeledInstance:
    """One feature vector with its signed binary label."""

    features: np.ndarray
    label: int


class Dataset:
    """Immutable ordered collection of labeled instances.

    Args:
        X: array-like of shape (n, d), coerced to float64.
        y: array-like of n labels, each exactly -1 or +1.
        role: one of ROLES; pools and secret sets must be non-empty.
    """

    __slots__ = ("X", "y", "role")

    def __init__(self, X, y, role: str = "camouflage_pool"):
        X = np.array(X, dtype=np.float64, order="C", copy=True)
        y = np.array(y, dtype=np.int64, copy=True).ravel()
        if X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(
                f"{X.shape[0]} feature rows but {y.shape[0]} labels"
            )
        if role not in ROLES:
            raise DataError(f"unknown role {role!r}")
        if role in ("camouflage_pool", "secret_set") and X.shape[0] == 0:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature value")
        if y.size and not np.all(np.isin(y, (-1, 1))):
            bad = y[~np.isin(y, (-1, 1))][0]
            raise DataError(f"label must be -1 or +1, got {bad}")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y
        self.role = role

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> LabeledInstance:
        return LabeledInstance(self.X[i], int(self.y[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices, role: str = "training_set") -> "Dataset":
        """Materialize the instances at `indices`, preserving their order."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self)):
            raise DataError("subset index out of range")
        return Dataset(self.X[idx], self.y[idx], role=role)

    def with_role(self, role: str) -> "Dataset":
        return Dataset(self.X, self.y, role=role)

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, d={self.dimension}, role={self.role!r})"


@dataclass(frozen=True)
class CandidateSet:
    """Index subset of a camouflage pool, with optional cached scores.

    Indices are strictly increasing, so two CandidateSets describe the same
    subset iff they compare equal. Cached values, when present, must equal
    fresh recomputation.
    """

    indices: tuple[int, ...]
    cached_risk: float | None = None
    cached_psi: float | None = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(i < 0 for i in idx):
            raise DataError("negative candidate index")
        if any(a >= b for a, b in zip(idx, idx[1:])):
            raise DataError("candidate indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)

    def materialize(self, pool: Dataset, role: str = "training_set") -> Dataset:
        return pool.subset(self.indices, role=role)

    def with_cache(self, risk: float, psi: float) -> "CandidateSet":
        return replace(self, cached_risk=float(risk), cached_psi=float(psi))


def _child_seed(seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngState:
    """Deterministic random stream (PCG64).

    Identical seed plus identical operation sequence gives bit-identical
    draws. Independent sub-streams come from `child(index)`, whose seed is
    the first 8 bytes of sha256("{seed}:{index}"); workers must never share
    a parent stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & ((1 << 64) - 1)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "RngState":
        return RngState(_child_seed(self.seed, index))

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed})"


def _parse_label(raw, label_map, where: str) -> int:
    if label_map is not None:
        key = str(raw).strip()
        if key in label_map:
            value = int(label_map[key])
            if value not in (-1, 1):
                raise DataError(
                    f"label_map must map to -1 or +1, got {value} for {key!r}"
                )
            return value
        raise DataError(f"{where}: label {raw!r} not in label map")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(
            f"{where}: non-numeric label {raw!r} requires a label map"
        ) from None
    if value not in (-1.0, 1.0):
        raise DataError(f"{where}: label must be -1 or +1, got {raw!r}")
    return int(value)


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        if format not in ("csv", "jsonl"):
            raise DataError(f"unknown format {format!r}")
        return format
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise DataError(f"cannot infer format from {path.name!r}; pass format=")


def load_dataset(
    path,
    format: str | None = None,
    label_map: dict | None = None,
    role: str = "camouflage_pool",
    add_bias: bool = False,
) -> Dataset:
    """Load a dataset from CSV (header f0..f{d-1},label) or JSONL.

    Row order in the file is the dataset's instance order. Labels are mapped
    to {-1, +1}: numeric -1/+1 pass through, anything else needs an explicit
    label_map from class name to sign. `add_bias` appends a constant-1
    feature to every instance.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    text = path.read_text(encoding="utf-8")
    rows: list[tuple[list[float], int]] = []
    dim = None

    if fmt == "csv":
        lines = [r for r in csv.reader(text.splitlines()) if r]
        if not lines:
            raise DataError(f"{path.name}: empty dataset")
        header = [h.strip() for h in lines[0]]
        if not header or header[-1] != "label":
            raise DataError(f"{path.name}: last CSV column must be 'label'")
        dim = len(header) - 1
        if dim < 1:
            raise DataError(f"{path.name}: no feature columns")
        for row_num, row in enumerate(lines[1:], start=1):
            where = f"{path.name} row {row_num}"
            if len(row) - 1 != dim:
                raise DataError(
                    f"{where}: expected {dim} features, got {len(row) - 1}"
                )
            try:
                feats = [float(v) for v in row[:-1]]
            except ValueError as exc:
                raise DataError(f"{where}: {exc}") from None
            rows.append((feats, _parse_label(row[-1], label_map, where)))
    else:
        for row_num, line in enumerate(
            (ln for ln in text.splitlines() if ln.strip()), start=1
        ):
            where = f"{path.name} row {row_num}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: {exc}") from None
            if "features" not in obj or "label" not in obj:
                raise DataError(f"{where}: need 'features' and 'label'")
            feats = [float(v) for v in obj["features"]]
            if dim is None:
                dim = len(feats)
            if len(feats) != dim:
                raise DataError(
                    f"{where}: expected {dim} features, got {len(feats)}"
                )
            rows.append((feats, _parse_label(obj["label"], label_map, where)))

    if not rows:
        raise DataError(f"{path.name}: empty dataset")
    X = np.array([f for f, _ in rows], dtype=np.float64)
    y = np.array([lab for _, lab in rows], dtype=np.int64)
    if add_bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return Dataset(X, y, role=role)


def save_dataset(data: Dataset, path, format: str | None = None) -> None:
    """Write a dataset so that load_dataset reproduces it bit-exactly."""
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        lines = [",".join([f"f{j}" for j in range(data.dimension)] + ["label"])]
        for i in range(len(data)):
            feats = [FLOAT_FORMAT % v for v in data.X[i]]
            lines.append(",".join(feats + [str(int(data.y[i]))]))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        lines = [
            json.dumps({"features": list(data.X[i]), "label": int(data.y[i])})
            for i in range(len(data))
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_train_test(
    data: Dataset, fraction: float, rng: RngState
) -> tuple[Dataset, Dataset]:
    """Shuffle-split into (train, test) with |train| = ceil(fraction * n).

    Both halves preserve the original relative instance order. The second
    half gets role 'test_set'; the first keeps the input's role.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(data)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    k = math.ceil(fraction * n - 1e-9)
    perm = rng.generator.permutation(n)
    first = np.sort(perm[:k])
    second = np.sort(perm[k:])
    if second.size == 0:
        warnings.warn(
            f"test split is empty (n={n}, fraction={fraction})", stacklevel=2
        )
    return (
        data.subset(first, role=data.role),
        data.subset(second, role="test_set"),
    )


def sample_subset(pool: Dataset, m: int, rng: RngState) -> CandidateSet:
    """Draw m distinct pool indices uniformly without replacement."""
    n = len(pool)
    if m < 0 or m > n:
        raise DataError(f"subset size {m} out of range for pool of {n}")
    idx = np.sort(rng.generator.choice(n, size=m, replace=False))
    return CandidateSet(tuple(int(i) for i in idx))
