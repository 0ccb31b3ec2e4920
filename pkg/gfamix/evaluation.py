"""
AUC scoring and the resampling harness that compares classifiers on paired
train/test draws of increasing training-set size.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.stats import rankdata

from gfamix.errors import UnknownClassifier, ValidationError
from gfamix.glasso import fit_glasso, predict_glasso
from gfamix.inference import fit
from gfamix.model import default_hyperparameters
from gfamix.predict import predict
from gfamix.serialization import save_glasso, save_model
from gfamix.utils import available_from_list

logger = logging.getLogger(__name__)

MAX_REDRAWS = 100


def auc(scores, labels):
    """
    Area under the ROC curve in its Mann-Whitney form: the fraction of
    (positive, negative) pairs ranked correctly, ties counting one half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError(
            f"{scores.size} scores were given for {labels.size} labels"
        )
    positive = labels == 1
    n_positive = int(positive.sum())
    n_negative = labels.size - n_positive
    if n_positive == 0 or n_negative == 0:
        raise ValidationError("AUC is undefined for single-class labels")
    ranks = rankdata(scores)
    u_statistic = ranks[positive].sum() - n_positive * (n_positive + 1) / 2
    return float(u_statistic / (n_positive * n_negative))


@dataclass(frozen=True)
class EvalReport:
    classifier: str
    train_sizes: Tuple[int, ...]
    auc_mean: Tuple[float, ...]
    auc_per_draw: Tuple[Tuple[float, ...], ...]
    n_repeats: int
    seed: int
    draws: Tuple[Tuple[Tuple[np.ndarray, np.ndarray], ...], ...]


class Classifier:
    """
    A classifier the harness can evaluate: `fit` trains on a labelled
    dataset and `scores` returns one real per test sample, larger meaning
    more likely to be class 1. `save` writes a fitted model document.
    """

    name = None

    @classmethod
    def from_options(cls, options, overrides):
        return cls()

    def fit(self, train, seed):
        raise NotImplementedError()

    def scores(self, fitted, test):
        raise NotImplementedError()

    def save(self, fitted, path):
        raise NotImplementedError()


class GfaMixClassifier(Classifier):
    name = "gfamix"

    def __init__(self, K=2, K_hat=4, S=2, overrides=None):
        self.hyper = default_hyperparameters(K, K_hat, S, **(overrides or {}))

    @classmethod
    def from_options(cls, options, overrides):
        return cls(options["K"], options["K_hat"], options["S"], overrides)

    def fit(self, train, seed):
        return fit(train, self.hyper, seed)

    def scores(self, fitted, test):
        return predict(fitted, test).prob_class1

    def save(self, fitted, path):
        save_model(fitted, path)


class NoSharedGfaMixClassifier(GfaMixClassifier):
    """The mixture without shared factors; they become cluster-specific ones."""

    name = "gfamix-noshared"

    def __init__(self, K=2, K_hat=4, S=2, overrides=None):
        super().__init__(K + K_hat, 0, S, overrides)


class GroupLassoClassifier(Classifier):
    name = "glasso"

    def __init__(self, n_lambda=30, cv_folds=5):
        self.n_lambda = n_lambda
        self.cv_folds = cv_folds

    @classmethod
    def from_options(cls, options, overrides):
        return cls(options["n_lambda"], options["cv_folds"])

    def fit(self, train, seed):
        return fit_glasso(train, self.n_lambda, self.cv_folds, seed)

    def scores(self, fitted, test):
        return predict_glasso(fitted, test)

    def save(self, fitted, path):
        save_glasso(fitted, path)


DEFAULT_CLASSIFIERS = {
    cls.name: cls
    for cls in [GfaMixClassifier, NoSharedGfaMixClassifier, GroupLassoClassifier]
}


def make_classifier(name, options, overrides=None, classifiers=DEFAULT_CLASSIFIERS):
    try:
        cls = classifiers[name]
    except KeyError:
        available = available_from_list(list(classifiers), "classifier", "classifiers")
        raise UnknownClassifier(name, available)
    return cls.from_options(options, overrides or {})


def _draw_seed(seed, train_size, repeat):
    return np.random.SeedSequence([seed, train_size, repeat])


def draw_split(labels, train_size, test_size, seed, repeat):
    """
    Draw disjoint train and test index sets uniformly without replacement,
    redrawing until both contain both classes.
    """
    rng = np.random.default_rng(_draw_seed(seed, train_size, repeat))
    for _ in range(MAX_REDRAWS):
        order = rng.permutation(len(labels))
        train = np.sort(order[:train_size])
        test = np.sort(order[train_size:train_size + test_size])
        if np.unique(labels[train]).size == 2 and np.unique(labels[test]).size == 2:
            return train, test
    raise ValidationError(
        f"Could not draw a training set of {train_size} and a test set of {test_size}"
        f" containing both classes in {MAX_REDRAWS} attempts"
    )


def resample_eval(
    dataset,
    classifier,
    train_sizes,
    test_size=10,
    n_repeats=10,
    seed=0,
    logger=logger,
):
    dataset.require_labels()
    train_sizes = tuple(int(s) for s in train_sizes)
    if not train_sizes:
        raise ValidationError("At least one training set size is required")
    if max(train_sizes) + test_size > dataset.n_samples:
        raise ValidationError(
            f"infeasible sizes: a training set of {max(train_sizes)} and a test set of"
            f" {test_size} need more than the {dataset.n_samples} samples available"
        )
    if n_repeats < 1:
        raise ValidationError(f"n_repeats must be at least 1, got {n_repeats}")

    name = classifier.name or type(classifier).__name__
    auc_per_draw = []
    draws = []
    for train_size in train_sizes:
        values = []
        size_draws = []
        for repeat in range(n_repeats):
            train, test = draw_split(dataset.labels, train_size, test_size, seed, repeat)
            fit_seed = int(_draw_seed(seed, train_size, repeat).generate_state(1)[0])
            fitted = classifier.fit(dataset.subset(train), fit_seed)
            test_set = dataset.subset(test)
            values.append(auc(classifier.scores(fitted, test_set), test_set.labels))
            size_draws.append((train, test))
        logger.info(
            "%s: mean AUC %.3f with %d training samples", name, np.mean(values), train_size
        )
        auc_per_draw.append(tuple(values))
        draws.append(tuple(size_draws))

    return EvalReport(
        classifier=name,
        train_sizes=train_sizes,
        auc_mean=tuple(float(np.mean(v)) for v in auc_per_draw),
        auc_per_draw=tuple(auc_per_draw),
        n_repeats=n_repeats,
        seed=seed,
        draws=tuple(draws),
    )
