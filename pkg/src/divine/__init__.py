"""Importance scoring, diverse influential subset selection and harmful-point removal
for weighted logistic regression."""
from ._backend import BACKEND
from .dataset import Dataset, SplitSpec, generate_synthetic, load_csv, split, standardize, toy_fixture
from .diversity import DiversityFn, KernelMatrix, marginal_gain, rbf_kernel
from .errors import DivineError
from .evalfn import EvalFn
from .model import ModelParams, fit, predict
from .removal import RemovalConfig, RemovalTrace, count_unfairness_inducing, run_removal
from .selection import (SelectionResult, TradeoffCurve, brute_force_select, greedy_select,
                        stochastic_greedy_select, tradeoff_curve)
from .valuation import ImportanceScores, MCConfig, compute_scores

__version__ = "0.1.0"
