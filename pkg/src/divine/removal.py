"""Iterative removal of harmful training points with refitting."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .dataset import Dataset
from .diversity import DiversityFn, KernelMatrix, rbf_kernel
from .errors import ConfigError, EmptyCellError
from .evalfn import EvalFn, f_equal_accuracy
from .selection import greedy_select
from .valuation import ImportanceScores, compute_scores

SELECTIONS = ("divine", "importance", "diversity", "random")


@dataclass
class RemovalConfig:
    measure: str = "IF"
    eval_fn: EvalFn = field(default_factory=lambda: EvalFn("equal_accuracy", "train"))
    batch_fraction: float = 0.05
    max_fraction: float = 0.60
    recalc_every_batch: bool = False
    selection: str = "importance"
    gamma: float = 0.0
    diversity: str = "sr"
    bandwidth: object = "median"
    seed: int = 0
    report_split: str = "train"
    reg: float = model.DEFAULT_REG
    tol: float = model.DEFAULT_TOL
    score_kw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.batch_fraction <= self.max_fraction <= 1:
            raise ConfigError("need 0 < batch_fraction <= max_fraction <= 1")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"unknown selection {self.selection!r}; expected one of {SELECTIONS}")
        if self.report_split not in ("train", "val", "test"):
            raise ConfigError(f"unknown report split {self.report_split!r}")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")


@dataclass
class RemovalTrace:
    cumulative_fraction_removed: list[float] = field(default_factory=list)
    removed_ids: list[list[int]] = field(default_factory=list)
    accuracy: list[float | None] = field(default_factory=list)
    unfairness: list[float | None] = field(default_factory=list)
    eval_value: list[float | None] = field(default_factory=list)
    all_harmful_exhausted: list[bool] = field(default_factory=list)

    COLUMNS = ("cumulative_fraction_removed", "n_removed", "accuracy", "unfairness",
               "eval_value", "all_harmful_exhausted", "removed_ids")

    def __len__(self):
        return len(self.cumulative_fraction_removed)

    def append(self, frac, ids, acc, unf, ev, exhausted):
        self.cumulative_fraction_removed.append(float(frac))
        self.removed_ids.append([int(i) for i in ids])
        self.accuracy.append(acc)
        self.unfairness.append(unf)
        self.eval_value.append(ev)
        self.all_harmful_exhausted.append(bool(exhausted))

    def to_csv(self, path=None) -> str:
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for k in range(len(self)):
            w.writerow([repr(self.cumulative_fraction_removed[k]), len(self.removed_ids[k]),
                        fmt(self.accuracy[k]), fmt(self.unfairness[k]), fmt(self.eval_value[k]),
                        int(self.all_harmful_exhausted[k]),
                        " ".join(str(i) for i in self.removed_ids[k])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "RemovalTrace":
        opt = lambda s: None if s == "" else float(s)  # noqa: E731
        tr = cls()
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                tr.append(float(r["cumulative_fraction_removed"]),
                          [int(t) for t in r["removed_ids"].split()],
                          opt(r["accuracy"]), opt(r["unfairness"]), opt(r["eval_value"]),
                          r["all_harmful_exhausted"] == "1")
        return tr


def _safe(fn):
    try:
        return float(fn())
    except EmptyCellError:
        return None


def _metrics(params, report: Dataset, f: EvalFn):
    acc = model.accuracy(params, report)
    unf = _safe(lambda: f_equal_accuracy(params, report))
    ev = _safe(lambda: f(params, report))
    return acc, unf, ev


def _report(splits, cfg, current):
    return current if cfg.report_split == "train" else splits[cfg.report_split]


def _pick(harm, remaining, k, cfg: RemovalConfig, kernel: KernelMatrix | None, batch_no: int):
    """Positions (into ``remaining``) of the next batch."""
    if cfg.selection == "importance":
        return np.argsort(-harm, kind="stable")[:k]
    if cfg.selection == "random":
        rng = np.random.default_rng([cfg.seed, batch_no])
        return rng.choice(len(remaining), size=k, replace=False)
    sub = KernelMatrix(kernel.entries[np.ix_(remaining, remaining)], kernel.bandwidth,
                       kernel.ids[remaining])
    divfn = DiversityFn(cfg.diversity, sub)
    if cfg.selection == "diversity":
        return np.asarray(greedy_select(np.zeros(len(remaining)), divfn, 1.0, k).chosen)
    return np.asarray(greedy_select(harm, divfn, cfg.gamma, k).chosen)


def run_removal(train: Dataset, val: Dataset, test: Dataset, cfg: RemovalConfig) -> RemovalTrace:
    """Remove batches of the most harmful points, refitting after each batch.

    Scores are negated so that harmful points rank first. With
    ``report_split="train"`` metrics describe the remaining training points;
    validation and test splits are reported in full.
    """
    splits = {"train": train, "val": val, "test": test}
    f = cfg.eval_fn
    score_eval = None if f.eval_split == "train" else splits[f.eval_split]
    n0 = train.n
    batch = max(1, math.ceil(cfg.batch_fraction * n0))
    budget = min(n0 - 1, math.floor(cfg.max_fraction * n0 + 1e-9))
    kernel = rbf_kernel(train, cfg.bandwidth) if cfg.selection in ("divine", "diversity") else None

    remaining = np.arange(n0)
    current = train
    params = model.fit(current, cfg.reg, cfg.tol)
    trace = RemovalTrace()
    trace.append(0.0, [], *_metrics(params, _report(splits, cfg, current), f), False)

    harm_all = None
    removed = 0
    batch_no = 0
    while removed < budget:
        k = min(batch, budget - removed)
        if harm_all is None or cfg.recalc_every_batch:
            sc = compute_scores(cfg.measure, current, f, eval_ds=score_eval, reg=cfg.reg,
                                tol=cfg.tol, **cfg.score_kw)
            harm = -sc.values
            if harm_all is None:
                harm_all = np.full(n0, np.nan)
            harm_all[remaining] = harm
        else:
            harm = harm_all[remaining]
        picks = _pick(harm, remaining, k, cfg, kernel, batch_no)
        keep = np.ones(len(remaining), dtype=bool)
        keep[picks] = False
        exhausted = not np.any(harm[keep] > 0)
        dropped = np.sort(remaining[picks])
        remaining = remaining[keep]
        current = train.subset(remaining)
        params = model.fit(current, cfg.reg, cfg.tol, theta0=params.theta)
        removed += k
        batch_no += 1
        trace.append(removed / n0, train.ids[dropped],
                     *_metrics(params, _report(splits, cfg, current), f), exhausted)
    return trace


def count_unfairness_inducing(scores: ImportanceScores, params, ds: Dataset) -> dict:
    """Points with negative importance, and how many of those ``params`` classifies correctly."""
    bad = np.flatnonzero(scores.values < 0)
    correct = model.predict(params, ds.features[bad]) == ds.labels[bad] if bad.size else np.array([])
    return {"count": int(bad.size), "count_correctly_classified": int(np.sum(correct))}
