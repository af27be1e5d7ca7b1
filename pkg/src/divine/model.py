"""Weighted-ERM logistic regression with exact gradients and Hessians.

Loss convention: ``l(x, y; theta) = log(1 + exp(-y * theta @ x))`` with
prediction ``sign(theta @ x)`` (ties go to +1). The alternative form
``log(1 + exp(+y theta @ x))`` paired with ``sigma(a) = 1 / (1 + exp(a))``
describes the same model under a flipped sigmoid; we use the textbook
orientation throughout and record it as ``convention = "neg-y"``.

Training objective::

    J(theta) = sum_i w_i * l(x_i, y_i; theta) + reg / 2 * ||theta||^2

minimised by damped Newton iterations with Armijo backtracking.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .errors import ConvergenceError

CONVENTION = "neg-y"
DEFAULT_REG = 1e-4
DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ModelParams:
    theta: np.ndarray
    reg: float = DEFAULT_REG
    converged: bool = True
    final_grad_norm: float = 0.0
    n_iter: int = 0

    def to_json(self) -> str:
        return json.dumps({"theta": [float(t) for t in self.theta], "reg": self.reg,
                           "convention": CONVENTION}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        obj = json.loads(text)
        if obj.get("convention", CONVENTION) != CONVENTION:
            raise ValueError(f"unsupported loss convention {obj['convention']!r}")
        return cls(theta=np.asarray(obj["theta"], dtype=float), reg=float(obj["reg"]))


@dataclass(frozen=True, eq=False)
class HessianInfo:
    matrix: np.ndarray
    damping: float


def _theta(params) -> np.ndarray:
    return params.theta if isinstance(params, ModelParams) else np.asarray(params, dtype=float)


def _objective(theta, X, y, w, reg):
    return w @ np.logaddexp(0.0, -y * (X @ theta)) + 0.5 * reg * theta @ theta


def newton_fit(X, y, w, reg=DEFAULT_REG, tol=DEFAULT_TOL, theta0=None, max_iter=100):
    """Minimise the weighted objective on raw arrays.

    Returns ``(theta, converged, grad_norm, n_iter)``; never raises on
    non-convergence so callers can decide how to report it.
    """
    d = X.shape[1]
    theta = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
    active = w > 0
    Xa, ya, wa = X[active], y[active], w[active]
    eye = np.eye(d)
    obj = _objective(theta, Xa, ya, wa, reg)
    gnorm = np.inf
    for it in range(max_iter + 1):
        margin = ya * (Xa @ theta)
        p = expit(-margin)  # sigma(-y theta.x)
        grad = -(Xa.T @ (wa * p * ya)) + reg * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta, True, gnorm, it
        if it == max_iter:
            break
        h = wa * p * (1.0 - p)
        H = (Xa.T * h) @ Xa + reg * eye
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        slope = grad @ step
        if slope < 1e-12:
            # inside the quadratic region objective differences drown in rounding
            theta = theta - step
            obj = _objective(theta, Xa, ya, wa, reg)
            continue
        t = 1.0
        while True:
            cand = theta - t * step
            cand_obj = _objective(cand, Xa, ya, wa, reg)
            if cand_obj <= obj - 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and cand_obj >= obj:
            # no further decrease representable in floating point
            return theta, gnorm <= 10 * tol, gnorm, it
        theta, obj = cand, cand_obj
    return theta, False, gnorm, max_iter


def fit(ds: Dataset, reg: float = DEFAULT_REG, tol: float = DEFAULT_TOL,
        weights=None, theta0=None, max_iter: int = 100) -> ModelParams:
    if reg < 0:
        raise ValueError("reg must be non-negative")
    w = ds.weights if weights is None else np.asarray(weights, dtype=float)
    labels = set(np.unique(ds.labels[w > 0]).tolist())
    if labels != {-1.0, 1.0}:
        warnings.warn("fitting on a single label: parameters are driven by the regularizer",
                      RuntimeWarning, stacklevel=2)
    theta, ok, gnorm, it = newton_fit(ds.features, ds.labels, w, reg, tol, theta0, max_iter)
    if not ok:
        raise ConvergenceError(f"Newton solver stopped at gradient norm {gnorm:.3g} "
                               f"after {it} iterations (tol={tol:g})")
    return ModelParams(theta=theta, reg=reg, converged=True, final_grad_norm=gnorm, n_iter=it)


def margins(params, X) -> np.ndarray:
    return np.asarray(X, dtype=float) @ _theta(params)


def loss_point(params, x, y) -> float:
    return float(np.logaddexp(0.0, -y * (np.asarray(x, dtype=float) @ _theta(params))))


def losses(params, ds: Dataset) -> np.ndarray:
    return np.logaddexp(0.0, -ds.labels * margins(params, ds.features))


def grad_point(params, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -expit(-y * (x @ _theta(params))) * y * x


def grad_points(params, ds: Dataset) -> np.ndarray:
    """Per-point loss gradients, one row per point."""
    p = expit(-ds.labels * margins(params, ds.features))
    return -(p * ds.labels)[:, None] * ds.features


def hessian(params, ds: Dataset, weights=None, reg=None) -> HessianInfo:
    theta = _theta(params)
    if reg is None:
        reg = params.reg if isinstance(params, ModelParams) else DEFAULT_REG
    w = ds.weights if weights is None else weights
    p = expit(ds.features @ theta)
    h = w * p * (1.0 - p)
    H = (ds.features.T * h) @ ds.features + reg * np.eye(ds.d)
    return HessianInfo(matrix=0.5 * (H + H.T), damping=float(reg))


def predict(params, x) -> np.ndarray | int:
    """Labels in {-1, +1}; ``theta @ x == 0`` maps to +1."""
    x = np.asarray(x, dtype=float)
    theta = _theta(params)
    if x.shape[-1] != theta.shape[0]:
        raise ValueError(f"dimension mismatch: x has {x.shape[-1]} features, theta has {theta.shape[0]}")
    out = np.where(x @ theta >= 0, 1, -1)
    return int(out) if out.ndim == 0 else out


def accuracy(params, ds: Dataset) -> float:
    correct = predict(params, ds.features) == ds.labels
    return float(ds.weights @ correct / ds.weights.sum())
