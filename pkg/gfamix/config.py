import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

HYPERPARAMETER_DEFAULTS = {
    "ard_shape": 1e-14,
    "ard_rate": 1e-14,
    "shared_ard_shape": 30.0,
    "shared_ard_rate": 1.0,
    "noise_shape": 1e-14,
    "noise_rate": 1e-14,
    "beta_weight": 100.0,
    "dirichlet_conc": 1.0,
    "beta_a": 0.5,
    "beta_b": 0.5,
    "max_iter": 1000,
    "elbo_rel_tol": 1e-6,
    "prune_threshold": None,
}

POSITIVE_REALS = [
    "ard_shape",
    "ard_rate",
    "shared_ard_shape",
    "shared_ard_rate",
    "noise_shape",
    "noise_rate",
    "beta_weight",
    "dirichlet_conc",
    "beta_a",
    "beta_b",
    "elbo_rel_tol",
]

RUN_DEFAULTS = {
    "seed": 0,
    "K": 2,
    "K_hat": 4,
    "S": 2,
    "classifier": "gfamix",
    "train_sizes": [4, 8, 16, 28, 42],
    "test_size": 10,
    "repeats": 10,
    "n_samples": 200,
    "n_views": 4,
    "view_dim": 5,
    "signal_ratio": 5.0,
    "noise_precision": 100.0,
    "n_lambda": 30,
    "cv_folds": 5,
    "svg": False,
}

MAX_SEED = 2**32 - 1

COMMANDS = ["simulate", "train", "predict", "evaluate", "reconstruct", "compare"]


@dataclass(frozen=True)
class RunConfig:
    command: str
    dataset_path: Optional[str] = None
    model_path: Optional[str] = None
    output_path: Optional[str] = None
    seed: int = RUN_DEFAULTS["seed"]
    overrides: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)


def merge_config(overrides, defaults):
    """
    Merge the user supplied values over a copy of the defaults; keys whose
    value is None in `overrides` fall back to the default.
    """
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = copy.deepcopy(value)
    return merged


def count_errors(K, K_hat, S):
    errors = []
    for name, value in [("K", K), ("K_hat", K_hat), ("S", S)]:
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
            return [f"{name} must be an integer, got {value!r}"]
        if value < 0:
            errors.append(f"{name} must be non-negative, got {value}")
    if not errors and K + K_hat < 1:
        errors.append(f"K + K_hat must be at least 1, got K={K} and K_hat={K_hat}")
    if not errors and S < 1:
        errors.append(f"S must be at least 1, got {S}")
    return errors


def hyperparameter_errors(values):
    errors = []
    for key, value in values.items():
        if key not in HYPERPARAMETER_DEFAULTS:
            errors.append(f"Unknown hyperparameter '{key}'")
        elif key in POSITIVE_REALS:
            if not _positive_real(value):
                errors.append(f"{key} must be a positive real, got {value!r}")
        elif key == "max_iter":
            if (
                not isinstance(value, (int, np.integer))
                or isinstance(value, bool)
                or value < 1
            ):
                errors.append(f"max_iter must be a positive integer, got {value!r}")
        elif key == "prune_threshold":
            if value is not None and not _positive_real(value):
                errors.append(f"prune_threshold must be positive or disabled, got {value!r}")
    return errors


def validate_counts(K, K_hat, S, logger=logger):
    errors = count_errors(K, K_hat, S)
    for error in errors:
        logger.error(error)
    return not errors


def validate_overrides(overrides, logger=logger):
    """
    Check hyperparameter values against their invariants, logging every
    violation so that the user sees all of them at once.
    """
    errors = hyperparameter_errors(overrides)
    for error in errors:
        logger.error(error)
    return not errors


def _positive_real(value):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
        return False
    return math.isfinite(value) and value > 0


def _valid_train_sizes(train_sizes, test_size, logger):
    if not train_sizes:
        logger.error("At least one training set size is required")
        return False
    for size in train_sizes:
        if size < 2:
            logger.error("Training set sizes must be at least 2, got %d", size)
            return False
    if test_size < 2:
        logger.error("The test set size must be at least 2, got %d", test_size)
        return False
    return True


def _valid_seed(seed, logger):
    if seed is None:
        return True
    if not 0 <= seed <= MAX_SEED:
        logger.error("The seed must be between 0 and %d, got %d", MAX_SEED, seed)
        return False
    return True


def build_run_config(args, logger=logger):
    """
    Turn parsed command line arguments into a `RunConfig`; returns None (after
    logging the reasons) when any value is invalid.
    """
    overrides = {
        "beta_weight": getattr(args, "beta_weight", None),
        "shared_ard_shape": getattr(args, "shared_ard_shape", None),
        "max_iter": getattr(args, "max_iter", None),
        "elbo_rel_tol": getattr(args, "tol", None),
        "prune_threshold": getattr(args, "prune_threshold", None),
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if not validate_overrides(overrides, logger):
        return None

    options = merge_config(
        {
            "K": getattr(args, "K", None),
            "K_hat": getattr(args, "K_hat", None),
            "S": getattr(args, "S", None),
            "classifier": getattr(args, "classifier", None),
            "train_sizes": getattr(args, "train_sizes", None),
            "test_size": getattr(args, "test_size", None),
            "repeats": getattr(args, "repeats", None),
            "n_samples": getattr(args, "N", None),
            "n_views": getattr(args, "M", None),
            "view_dim": getattr(args, "D", None),
            "signal_ratio": getattr(args, "signal_ratio", None),
            "noise_precision": getattr(args, "noise_precision", None),
            "svg": getattr(args, "svg", None),
        },
        RUN_DEFAULTS,
    )
    if not validate_counts(options["K"], options["K_hat"], options["S"], logger):
        return None
    if not _valid_seed(args.seed, logger):
        return None
    if args.command in ["evaluate", "compare"]:
        if not _valid_train_sizes(options["train_sizes"], options["test_size"], logger):
            return None
        if options["repeats"] < 1:
            logger.error("repeats must be at least 1, got %d", options["repeats"])
            return None

    return RunConfig(
        command=args.command,
        dataset_path=getattr(args, "data", None),
        model_path=getattr(args, "model", None),
        output_path=getattr(args, "out", None),
        seed=RUN_DEFAULTS["seed"] if args.seed is None else args.seed,
        overrides=overrides,
        options=options,
    )
