"""Run configuration: one flat JSON object, every field defaulted."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .errors import ConfigError

SEED_ENV = "DIVINE_SEED"


@dataclass
class RunConfig:
    # data
    dataset: str = "synthetic"  # synthetic | toy | csv
    csv_path: str | None = None
    schema_path: str | None = None
    n_main: int = 2000
    n_outlier: int = 50
    train_frac: float = 0.7
    val_frac: float = 0.2
    test_frac: float = 0.1
    # model; None picks 1.0 for the toy fixture and 1e-4 otherwise
    reg: float | None = None
    tol: float = 1e-8
    # scoring
    measure: str = "IF"
    variant: str = "auto"
    cfp_mode: str = "retrain"
    eval: str = "loss"
    eval_split: str = "train"
    mc_max_permutations: int = 1000
    mc_truncation_tol: float | None = None
    mc_convergence_window: int | None = 100
    # selection
    diversity: str = "sr"
    bandwidth: str = "median"
    gamma: str = "0"
    m: int = 5
    grid_size: int = 41
    # removal
    batch: float = 0.05
    max: float = 0.6
    selection: str = "importance"
    recalc: bool = False
    report_split: str = "train"
    # run
    output_dir: str = "out"
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.dataset not in ("synthetic", "toy", "csv"):
            raise ConfigError(f"unknown dataset source {self.dataset!r}")
        if self.dataset == "csv" and not (self.csv_path and self.schema_path):
            raise ConfigError("dataset=csv needs csv_path and schema_path")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.grid_size < 1:
            raise ConfigError("grid_size must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_dict(obj)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def portable_dict(self) -> dict:
        """Config without the output location, which does not affect results."""
        d = self.to_dict()
        d.pop("output_dir")
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.portable_dict(), sort_keys=True).encode()).hexdigest()

    def sub_seed(self, name: str) -> int:
        return derive_seed(self.seed, name)

    def effective_reg(self) -> float:
        if self.reg is not None:
            return float(self.reg)
        from .dataset import TOY_REG
        from .model import DEFAULT_REG

        return TOY_REG if self.dataset == "toy" else DEFAULT_REG


def derive_seed(seed: int, name: str) -> int:
    """Stable 32-bit seed for a named random stream."""
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def apply_env(cfg: RunConfig) -> RunConfig:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return cfg
    try:
        return cfg.replace(seed=int(raw))
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
