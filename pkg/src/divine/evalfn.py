"""Evaluation functions f(theta); lower is better, values are non-negative.

Rate-based functions use hard predictions, so they are piecewise constant in
theta and expose no gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .dataset import Dataset
from .errors import ConfigError, EmptyCellError

KINDS = ("loss", "local_loss", "equal_accuracy", "equal_opportunity", "equalized_odds",
         "loss+unfairness")
SPLITS = ("train", "val", "test")


def _rate(pred, ds, group, label, target):
    """P(y_hat = target | A = group, y = label)."""
    cell = (ds.sensitive == group) & (ds.labels == label)
    if not cell.any():
        raise EmptyCellError(group, int(label))
    return float(np.mean(pred[cell] == target))


def f_loss(params, ds: Dataset) -> float:
    return float(model.losses(params, ds).sum())


def f_local_loss(params, point) -> float:
    x, y = point
    return model.loss_point(params, x, y)


def f_equal_accuracy(params, ds: Dataset) -> float:
    pred = model.predict(params, ds.features)
    return sum(abs(_rate(pred, ds, "a", j, j) - _rate(pred, ds, "b", j, j)) for j in (-1, 1))


def f_equal_opportunity(params, ds: Dataset) -> float:
    pred = model.predict(params, ds.features)
    return abs(_rate(pred, ds, "a", 1, 1) - _rate(pred, ds, "b", 1, 1))


def f_equalized_odds(params, ds: Dataset) -> float:
    pred = model.predict(params, ds.features)
    return sum(abs(_rate(pred, ds, "a", j, 1) - _rate(pred, ds, "b", j, 1)) for j in (-1, 1))


@dataclass(frozen=True)
class EvalFn:
    """An evaluation function descriptor.

    ``point`` is the id of the point whose loss is measured for ``local_loss``
    (looked up in the dataset passed to :meth:`__call__`).
    """

    kind: str = "loss"
    eval_split: str = "train"
    point: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown evaluation function {self.kind!r}")
        if self.eval_split not in SPLITS:
            raise ConfigError(f"unknown split {self.eval_split!r}")
        if self.kind == "local_loss" and self.point is None:
            raise ConfigError("local_loss needs a point id")

    @classmethod
    def parse(cls, name: str, eval_split: str = "train") -> "EvalFn":
        """Parse CLI names: ``loss``, ``local:<id>``, ``equal_accuracy``, ..."""
        if name.startswith("local:"):
            try:
                return cls("local_loss", eval_split, int(name.split(":", 1)[1]))
            except ValueError:
                raise ConfigError(f"bad local point id in {name!r}") from None
        return cls(name, eval_split)

    @property
    def name(self) -> str:
        return f"local:{self.point}" if self.kind == "local_loss" else self.kind

    @property
    def differentiable(self) -> bool:
        return self.kind in ("loss", "local_loss")

    @property
    def is_fairness(self) -> bool:
        return self.kind in ("equal_accuracy", "equal_opportunity", "equalized_odds",
                             "loss+unfairness")

    def _local(self, ds):
        k = int(ds.positions([self.point])[0])
        return ds.features[k], ds.labels[k]

    def __call__(self, params, ds: Dataset) -> float:
        if self.kind == "loss":
            return f_loss(params, ds)
        if self.kind == "local_loss":
            return f_local_loss(params, self._local(ds))
        if self.kind == "equal_accuracy":
            return f_equal_accuracy(params, ds)
        if self.kind == "equal_opportunity":
            return f_equal_opportunity(params, ds)
        if self.kind == "equalized_odds":
            return f_equalized_odds(params, ds)
        return f_loss(params, ds) + f_equal_accuracy(params, ds)

    def gradient(self, params, ds: Dataset) -> np.ndarray:
        if self.kind == "loss":
            return model.grad_points(params, ds).sum(axis=0)
        if self.kind == "local_loss":
            x, y = self._local(ds)
            return model.grad_point(params, x, y)
        raise TypeError(f"{self.kind} is piecewise constant in theta and has no gradient")


def importance_of(f: EvalFn, theta_new, theta_old, ds: Dataset) -> float:
    """``f(theta_new) - f(theta_old)``; positive means the removed content helped."""
    return f(theta_new, ds) - f(theta_old, ds)
