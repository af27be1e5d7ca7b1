"""Command-line entry point: ``divine {value,select,tradeoff,remove,synth,toy}``.

Settings come from built-in defaults, then ``--config``, then the
``DIVINE_SEED`` environment variable, then explicit flags. Every command
writes its output file(s) plus ``<command>.manifest.json`` into the output
directory. Errors print one line ``error: <category>: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, model
from ._backend import BACKEND
from .config import RunConfig, apply_env
from .dataset import (TOY_OUTLIER, TOY_POISONED, SplitSpec, generate_synthetic, load_csv,
                      load_schema, split, standardize, toy_fixture)
from .diversity import DiversityFn, rbf_kernel
from .errors import ConfigError, DivineError
from .evalfn import EvalFn, f_equal_accuracy
from .removal import RemovalConfig, run_removal
from .selection import (gamma_by_influence_budget, gamma_by_max_pairwise_distance, greedy_select,
                        tradeoff_curve)
from .valuation import MCConfig, compute_scores

EXIT_ERROR = 2


def _grid(cfg: RunConfig) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-4, 5, cfg.grid_size)])


def _splits(cfg: RunConfig):
    if cfg.dataset == "toy":
        ds = toy_fixture()
        return ds, ds, ds
    if cfg.dataset == "csv":
        ds = load_csv(cfg.csv_path, load_schema(cfg.schema_path))
    else:
        ds = generate_synthetic(cfg.n_main, cfg.n_outlier, seed=cfg.sub_seed("synthetic"))
    spec = SplitSpec(cfg.train_frac, cfg.val_frac, cfg.test_frac, seed=cfg.sub_seed("split"))
    return standardize(*split(ds, spec))


def _score_kwargs(cfg: RunConfig) -> dict:
    kw = {"n_jobs": cfg.n_jobs}
    if cfg.measure == "IF":
        kw["variant"] = cfg.variant
    elif cfg.measure == "CFP":
        kw["mode"] = cfg.cfp_mode
    return kw


def _scores(cfg: RunConfig, train, val, test):
    f = EvalFn.parse(cfg.eval, cfg.eval_split)
    eval_ds = {"train": None, "val": val, "test": test}[cfg.eval_split]
    mc = MCConfig(cfg.mc_max_permutations, cfg.mc_truncation_tol, cfg.mc_convergence_window,
                  seed=cfg.sub_seed("shapley"))
    sc = compute_scores(cfg.measure, train, f, eval_ds=eval_ds, reg=cfg.effective_reg(),
                        tol=cfg.tol, mc=mc, **_score_kwargs(cfg))
    sc.meta["seed"] = cfg.seed
    return sc


def _divfn(cfg: RunConfig, train) -> DiversityFn:
    bw = cfg.bandwidth if cfg.bandwidth == "median" else float(cfg.bandwidth)
    return DiversityFn(cfg.diversity, rbf_kernel(train, bw))


def _write(outdir: Path, name: str, text: str, written: dict) -> None:
    path = outdir / name
    path.write_text(text)
    written[name] = hashlib.sha256(text.encode()).hexdigest()


def _manifest(cfg: RunConfig, command: str, outdir: Path, written: dict) -> None:
    import scipy
    import sklearn

    man = {"command": command, "config": cfg.portable_dict(), "config_hash": cfg.hash(),
           "seed": cfg.seed, "backend": BACKEND, "outputs": written,
           "versions": {"divine": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                        "scikit-learn": sklearn.__version__,
                        "python": platform.python_version()}}
    (outdir / f"{command}.manifest.json").write_text(json.dumps(man, sort_keys=True, indent=1) + "\n")


def cmd_value(cfg: RunConfig, outdir: Path, written: dict) -> None:
    train, val, test = _splits(cfg)
    _write(outdir, "scores.json", _scores(cfg, train, val, test).to_json() + "\n", written)


def _resolve_gamma(cfg, scores, divfn, train) -> float:
    g = cfg.gamma.strip()
    if g.startswith("budget:"):
        curve = tradeoff_curve(scores, divfn, cfg.m, _grid(cfg), n_jobs=cfg.n_jobs)
        return gamma_by_influence_budget(curve, float(g.split(":", 1)[1]))
    if g == "maxdist":
        return gamma_by_max_pairwise_distance(scores, divfn, cfg.m, _grid(cfg), train,
                                              n_jobs=cfg.n_jobs)
    try:
        return float(g)
    except ValueError:
        raise ConfigError(f"--gamma must be a number, budget:<frac> or maxdist, got {g!r}") from None


def cmd_select(cfg: RunConfig, outdir: Path, written: dict) -> None:
    train, val, test = _splits(cfg)
    scores = _scores(cfg, train, val, test)
    divfn = _divfn(cfg, train)
    gamma = _resolve_gamma(cfg, scores, divfn, train)
    res = greedy_select(scores, divfn, gamma, cfg.m)
    _write(outdir, "selection.json", res.to_json() + "\n", written)


def cmd_tradeoff(cfg: RunConfig, outdir: Path, written: dict) -> None:
    train, val, test = _splits(cfg)
    scores = _scores(cfg, train, val, test)
    curve = tradeoff_curve(scores, _divfn(cfg, train), cfg.m, _grid(cfg), n_jobs=cfg.n_jobs)
    _write(outdir, "tradeoff.csv", curve.to_csv(), written)


def cmd_remove(cfg: RunConfig, outdir: Path, written: dict) -> None:
    train, val, test = _splits(cfg)
    bw = cfg.bandwidth if cfg.bandwidth == "median" else float(cfg.bandwidth)
    gamma = float(cfg.gamma) if cfg.selection == "divine" else 0.0
    rc = RemovalConfig(measure=cfg.measure, eval_fn=EvalFn.parse(cfg.eval, cfg.eval_split),
                       batch_fraction=cfg.batch, max_fraction=cfg.max,
                       recalc_every_batch=cfg.recalc, selection=cfg.selection, gamma=gamma,
                       diversity=cfg.diversity, bandwidth=bw, seed=cfg.sub_seed("removal"),
                       report_split=cfg.report_split, reg=cfg.effective_reg(), tol=cfg.tol,
                       score_kw=_score_kwargs(cfg))
    _write(outdir, "removal.csv", run_removal(train, val, test, rc).to_csv(), written)


def cmd_synth(cfg: RunConfig, outdir: Path, written: dict) -> None:
    ds = generate_synthetic(cfg.n_main, cfg.n_outlier, seed=cfg.sub_seed("synthetic"))
    ds.to_csv(outdir / "synthetic.csv")
    written["synthetic.csv"] = hashlib.sha256((outdir / "synthetic.csv").read_bytes()).hexdigest()
    schema = {"columns": {"id": "ignore", "x1": "feature", "x2": "feature", "label": "label",
                          "sensitive": "sensitive"},
              "label_map": {"1": 1, "-1": -1}, "sensitive_map": {"a": "a", "b": "b"}}
    _write(outdir, "synthetic.schema.json", json.dumps(schema, sort_keys=True, indent=1) + "\n", written)


def toy_report(reg: float | None = None) -> dict:
    """Fixture outcomes and the top point per measure and evaluation function."""
    from .dataset import TOY_REG

    reg = TOY_REG if reg is None else reg
    ds = toy_fixture()
    five = ds.subset(range(5))
    p5, p6 = model.fit(five, reg), model.fit(ds, reg)
    rep = {"reg": reg, "outlier": TOY_OUTLIER, "poisoned": TOY_POISONED,
           "five_point": {"accuracy": model.accuracy(p5, five), "unfairness": f_equal_accuracy(p5, five)},
           "six_point": {"accuracy": model.accuracy(p6, ds), "unfairness": f_equal_accuracy(p6, ds)},
           "argmax": {}}
    checks = {"five_point_accuracy_1": rep["five_point"]["accuracy"] == 1.0,
              "five_point_unfairness_0": rep["five_point"]["unfairness"] == 0.0,
              "six_point_accuracy_5/6": abs(rep["six_point"]["accuracy"] - 5 / 6) < 1e-12,
              "six_point_unfairness_1": abs(rep["six_point"]["unfairness"] - 1.0) <= 1e-9}
    for fname, target in (("loss", TOY_OUTLIER), ("equal_accuracy", TOY_POISONED)):
        f = EvalFn(fname)
        for measure in ("LOO", "IF", "DS_exact", "CFP"):
            vals = compute_scores(measure, ds, f, reg=reg).values
            mags = np.abs(vals)
            top = np.flatnonzero(mags == mags.max())
            rep["argmax"][f"{measure}/{fname}"] = [int(t) for t in top]
            checks[f"{measure}/{fname}"] = top.tolist() == [target]
    rep["checks"] = checks
    rep["all_passed"] = all(checks.values())
    return rep


def cmd_toy(cfg: RunConfig, outdir: Path, written: dict) -> None:
    rep = toy_report(cfg.reg)
    _write(outdir, "toy_report.json", json.dumps(rep, sort_keys=True, indent=1) + "\n", written)


COMMANDS = {"value": cmd_value, "select": cmd_select, "tradeoff": cmd_tradeoff,
            "remove": cmd_remove, "synth": cmd_synth, "toy": cmd_toy}

# flag -> (config field, type); only flags given on the command line override
_COMMON = [("--seed", "seed", int), ("--output-dir", "output_dir", str),
           ("--dataset", "dataset", str), ("--csv", "csv_path", str), ("--schema", "schema_path", str),
           ("--n-main", "n_main", int), ("--n-outlier", "n_outlier", int),
           ("--reg", "reg", float), ("--tol", "tol", float), ("--n-jobs", "n_jobs", int)]
_SCORING = [("--measure", "measure", str), ("--eval", "eval", str), ("--eval-split", "eval_split", str),
            ("--variant", "variant", str), ("--cfp-mode", "cfp_mode", str),
            ("--permutations", "mc_max_permutations", int)]
_DIVERSITY = [("--diversity", "diversity", str), ("--bandwidth", "bandwidth", str),
              ("--m", "m", int)]
_FLAGS = {
    "value": _COMMON + _SCORING,
    "select": _COMMON + _SCORING + _DIVERSITY + [("--gamma", "gamma", str), ("--grid-size", "grid_size", int)],
    "tradeoff": _COMMON + _SCORING + _DIVERSITY + [("--grid-size", "grid_size", int)],
    "remove": _COMMON + _SCORING + _DIVERSITY + [
        ("--score-split", "eval_split", str), ("--report-split", "report_split", str),
        ("--batch", "batch", float), ("--max", "max", float), ("--selection", "selection", str),
        ("--gamma", "gamma", str)],
    "synth": _COMMON,
    "toy": _COMMON,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divine", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, flags in _FLAGS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        for flag, dest, typ in flags:
            sp.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS)
        if name == "remove":
            sp.add_argument("--recalc", dest="recalc", action="store_true", default=argparse.SUPPRESS)
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = apply_env(cfg)
    return RunConfig.from_dict({**cfg.to_dict(), **overrides})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        outdir = Path(cfg.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        written: dict = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            COMMANDS[args.command](cfg, outdir, written)
        _manifest(cfg, args.command, outdir, written)
    except DivineError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, IndexError) as exc:
        print(f"error: value: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
