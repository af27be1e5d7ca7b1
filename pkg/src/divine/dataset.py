"""Labeled datasets with a binary sensitive attribute.

A :class:`Dataset` is immutable: every mutating operation (``split``,
``drop_points``, ``standardize``) returns new instances. Labels are ``-1/+1``
and the sensitive attribute takes the values ``"a"`` and ``"b"``. When a
dataset is built through :func:`load_csv` or :func:`generate_synthetic` a
constant intercept column is appended as the last feature.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import multivariate_normal

from .errors import SchemaError, SplitError

GROUPS = ("a", "b")
ROLES = ("feature", "categorical", "label", "sensitive", "ignore")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    weights: np.ndarray
    ids: np.ndarray
    feature_names: tuple[str, ...] = ()
    has_intercept: bool = True

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise SchemaError(f"features must be a non-empty n x d matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise SchemaError("features contain non-finite values")
        n = X.shape[0]
        y = np.asarray(self.labels, dtype=float)
        if y.shape != (n,) or not np.all(np.isin(y, (-1.0, 1.0))):
            raise SchemaError("labels must be an n-vector with values in {-1, +1}")
        s = np.asarray(self.sensitive).astype("<U1")
        if s.shape != (n,) or not np.all(np.isin(s, GROUPS)):
            raise SchemaError("sensitive must be an n-vector with values in {'a', 'b'}")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0):
            raise SchemaError("weights must be a non-negative n-vector")
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (n,):
            raise SchemaError("ids must be an n-vector")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise SchemaError("feature_names length does not match the number of columns")
        for arr in (X, y, w, ids):
            arr.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "sensitive", s)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_arrays(cls, features, labels, sensitive, ids=None, feature_names=(),
                    add_intercept=True) -> "Dataset":
        X = np.asarray(features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = tuple(feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if add_intercept:
            X = np.hstack([X, np.ones((X.shape[0], 1))])
            names = names + ("intercept",)
        n = X.shape[0]
        return cls(
            features=X,
            labels=labels,
            sensitive=sensitive,
            weights=np.full(n, 1.0 / n),
            ids=np.arange(n) if ids is None else ids,
            feature_names=names,
            has_intercept=add_intercept,
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def raw_features(self) -> np.ndarray:
        """Feature matrix without the intercept column."""
        return self.features[:, :-1] if self.has_intercept else self.features

    def subset(self, index, renormalize: bool = True) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        n = len(index)
        w = np.full(n, 1.0 / n) if renormalize and n else self.weights[index]
        return replace(
            self,
            features=self.features[index],
            labels=self.labels[index],
            sensitive=self.sensitive[index],
            weights=w,
            ids=self.ids[index],
        )

    def positions(self, ids) -> np.ndarray:
        """Row positions of the given point ids."""
        lookup = {int(i): k for k, i in enumerate(self.ids)}
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise SchemaError(f"unknown point id {exc.args[0]}") from None

    def to_csv(self, path) -> None:
        names = [c for c in self.feature_names if not (self.has_intercept and c == "intercept")]
        X = self.raw_features
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["id", *names, "label", "sensitive"])
            for k in range(self.n):
                out.writerow([int(self.ids[k]), *(repr(float(v)) for v in X[k]),
                              int(self.labels[k]), self.sensitive[k]])


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.2
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if min(fracs) <= 0 or abs(sum(fracs) - 1.0) > 1e-9:
            raise SplitError(f"split fractions must be positive and sum to 1, got {fracs}")


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    n = ds.n
    n_train = int(round(spec.train_frac * n))
    n_val = int(round(spec.val_frac * n))
    n_test = n - n_train - n_val
    sizes = {"train": n_train, "val": n_val, "test": n_test}
    empty = [k for k, v in sizes.items() if v <= 0]
    if empty:
        raise SplitError(f"split {'/'.join(empty)} would be empty for n={n}")
    perm = np.random.default_rng(spec.seed).permutation(n)
    parts = np.split(perm, [n_train, n_train + n_val])
    return tuple(ds.subset(np.sort(p)) for p in parts)


def drop_points(ds: Dataset, indices: Sequence[int]) -> Dataset:
    """Remove rows (by position) and re-normalize weights over the survivors."""
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= ds.n):
        raise IndexError(f"index out of range for dataset of size {ds.n}")
    if len(np.unique(idx)) != idx.size:
        raise ValueError("indices must be distinct")
    keep = np.setdiff1d(np.arange(ds.n), idx)
    if keep.size == 0:
        raise SplitError("cannot drop every point")
    return ds.subset(keep)


def standardize(train: Dataset, *others: Dataset) -> tuple[Dataset, ...]:
    """Zero-mean / unit-variance columns using statistics of ``train``.

    The intercept column is left untouched. Constant columns keep scale 1.
    """
    X = train.raw_features
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0

    def apply(ds):
        Z = (ds.raw_features - mu) / sd
        if ds.has_intercept:
            Z = np.hstack([Z, ds.features[:, -1:]])
        return replace(ds, features=Z)

    return tuple(apply(ds) for ds in (train, *others))


# --------------------------------------------------------------------- loaders

def _parse_label(value: str, mapping: dict, row: int, column: str) -> float:
    if value in mapping:
        out = mapping[value]
    else:
        try:
            out = float(value)
        except ValueError:
            raise SchemaError(f"row {row}, column {column!r}: label {value!r} is not mapped") from None
    if out not in (-1, 1):
        raise SchemaError(f"row {row}, column {column!r}: label {value!r} does not map to -1/+1")
    return float(out)


def load_schema(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_csv(path, schema: dict) -> Dataset:
    """Read a CSV with a header row according to a column-role schema.

    ``schema`` looks like::

        {"columns": {"age": "feature", "race": "sensitive", "two_year_recid": "label",
                     "charge": "categorical", "name": "ignore"},
         "label_map": {"1": 1, "0": -1},
         "sensitive_map": {"African-American": "a", "Caucasian": "b"}}

    Columns with role ``categorical`` are one-hot encoded (levels in sorted
    order); the resulting names are ``column=level``. Columns missing from
    ``columns`` are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    roles = dict(schema.get("columns", {}))
    bad = {c: r for c, r in roles.items() if r not in ROLES}
    if bad:
        raise SchemaError(f"unknown column roles: {bad}")
    label_cols = [c for c, r in roles.items() if r == "label"]
    sens_cols = [c for c, r in roles.items() if r == "sensitive"]
    if len(label_cols) != 1 or len(sens_cols) != 1:
        raise SchemaError("schema must name exactly one label and one sensitive column")
    label_col, sens_col = label_cols[0], sens_cols[0]
    label_map = {str(k): v for k, v in schema.get("label_map", {}).items()}
    sens_map = {str(k): str(v) for k, v in schema.get("sensitive_map", {}).items()}

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in roles if c not in header]
        if missing:
            raise SchemaError(f"missing column(s) {missing} in {path.name}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path.name} has no data rows")

    numeric = [c for c in header if roles.get(c) == "feature"]
    categorical = [c for c in header if roles.get(c) == "categorical"]
    levels = {c: sorted({r[c] for r in rows}) for c in categorical}

    if not sens_map:
        values = sorted({r[sens_col] for r in rows})
        if len(values) != 2:
            raise SchemaError(f"column {sens_col!r} is not binary: {values[:5]}")
        sens_map = {values[0]: "a", values[1]: "b"}

    X, y, s = [], [], []
    for k, r in enumerate(rows, start=2):  # header is line 1
        vec = []
        for c in numeric:
            try:
                v = float(r[c])
            except (TypeError, ValueError):
                raise SchemaError(f"row {k}, column {c!r}: non-numeric value {r[c]!r}") from None
            if not math.isfinite(v):
                raise SchemaError(f"row {k}, column {c!r}: non-finite value {r[c]!r}")
            vec.append(v)
        for c in categorical:
            vec.extend(1.0 if r[c] == lv else 0.0 for lv in levels[c])
        X.append(vec)
        y.append(_parse_label(r[label_col], label_map, k, label_col))
        g = sens_map.get(r[sens_col])
        if g not in GROUPS:
            raise SchemaError(f"row {k}, column {sens_col!r}: value {r[sens_col]!r} is not one of "
                              f"the two declared groups")
        s.append(g)

    names = tuple(numeric) + tuple(f"{c}={lv}" for c in categorical for lv in levels[c])
    X = np.asarray(X, dtype=float).reshape(len(rows), len(names))
    if X.shape[1] == 0:
        raise SchemaError("schema declares no feature columns")
    return Dataset.from_arrays(X, y, s, feature_names=names)


def generate_synthetic(n_main: int = 2000, n_outlier: int = 50, seed: int = 0,
                       rotation: float = math.pi / 4) -> Dataset:
    """Two Gaussian classes plus a block of positive outliers.

    The sensitive attribute is drawn per point with ``P(A=a)`` equal to the
    class-posterior of +1 evaluated at the rotated feature vector.
    """
    if n_main <= 0 or n_outlier <= 0:
        raise ValueError("n_main and n_outlier must be positive")
    rng = np.random.default_rng(seed)
    pos = multivariate_normal(mean=[3.0, 3.0], cov=[[2.0, 1.0], [1.0, 2.0]])
    neg = multivariate_normal(mean=[-2.0, -2.0], cov=[[1.0, 0.0], [0.0, 1.0]])

    y = rng.choice([-1.0, 1.0], size=n_main)
    n_pos = int((y > 0).sum())
    X = np.empty((n_main, 2))
    X[y > 0] = rng.multivariate_normal([3.0, 3.0], [[2.0, 1.0], [1.0, 2.0]], size=n_pos)
    X[y < 0] = rng.multivariate_normal([-2.0, -2.0], np.eye(2), size=n_main - n_pos)
    X_out = rng.multivariate_normal([-2.0, 8.0], np.eye(2), size=n_outlier)
    X = np.vstack([X, X_out])
    y = np.concatenate([y, np.ones(n_outlier)])

    c, s_ = math.cos(rotation), math.sin(rotation)
    rot = np.array([[c, -s_], [s_, c]])
    Xr = X @ rot
    p_pos, p_neg = pos.pdf(Xr), neg.pdf(Xr)
    p_a = p_pos / (p_pos + p_neg)
    sens = np.where(rng.random(len(y)) < p_a, "a", "b")
    return Dataset.from_arrays(X, y, sens, feature_names=("x1", "x2"))


TOY_OUTLIER_XY = (-5.0, 2.0)
TOY_POISON_XY = (3.5, 1.25)
# fixture regularization; at 1e-4 the separable 5-point fit makes the poisoned
# point dominate every loss-based score
TOY_REG = 1.0


def toy_fixture() -> Dataset:
    """Square of four points, a far negative outlier and one poisoned point.

    Rows: 0 (-1, 1) y=-1 a; 1 (1, 1) y=-1 b; 2 (-1, -1) y=+1 a;
    3 (1, -1) y=+1 b; 4 outlier (top left) y=-1 a; 5 poisoned (top right) y=+1 a.
    Fit with ``TOY_REG``.
    """
    X = np.array([[-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], TOY_OUTLIER_XY, TOY_POISON_XY])
    y = np.array([-1.0, -1.0, 1.0, 1.0, -1.0, 1.0])
    s = np.array(["a", "b", "a", "b", "a", "a"])
    return Dataset.from_arrays(X, y, s, feature_names=("x1", "x2"))


TOY_OUTLIER = 4
TOY_POISONED = 5
