"""
Group-LASSO logistic regression with one group per view, the baseline the
mixture is compared against.

The objective is

    (1/N) sum_n logistic_loss(r_n, b + sum_m x_n^(m) . w^(m)) + lam * sum_m sqrt(D_m) ||w^(m)||

over standardized features. It is minimized by block coordinate descent:
each view's block takes one proximal gradient step on the quadratic majorizer
of the logistic loss (whose curvature is bounded by 1/4), followed by the
group soft-threshold. The intercept takes the same majorize-minimize step
without a penalty. Every step therefore decreases the objective.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import expit, logit
from sklearn.model_selection import StratifiedKFold

from gfamix.dataset import check_view_dims
from gfamix.errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

LOGISTIC_CURVATURE = 0.25
LAMBDA_RANGE = 1e-3
KKT_TOLERANCE = 1e-9
MAX_CYCLES = 100000
# stopping rule of the warm-started cross-validation path
CV_TOLERANCE = 1e-5
CV_MAX_CYCLES = 100
REFIT_MAX_CYCLES = 10000
# decades below lambda_max of the penalty used when cross-validation is impossible
UNVALIDATED_DECADES = 1.0
# keeps every group exactly zero at the top of the path despite rounding
LAMBDA_MAX_HEADROOM = 1 + 1e-9


@dataclass(frozen=True)
class GLassoModel:
    intercept: float
    weights: Tuple[np.ndarray, ...]
    lambda_selected: float
    lambda_path: Tuple[float, ...]
    cv_curve: Tuple[float, ...]
    feature_means: Tuple[np.ndarray, ...]
    feature_scales: Tuple[np.ndarray, ...]

    @property
    def view_dims(self):
        return tuple(w.shape[0] for w in self.weights)

    def standardized_weights(self):
        return [w * s for w, s in zip(self.weights, self.feature_scales)]

    def standardized_intercept(self):
        return self.intercept + sum(
            float(mu @ w) for mu, w in zip(self.feature_means, self.weights)
        )


def _standardization(views):
    means = [v.mean(axis=0) for v in views]
    scales = []
    for v in views:
        scale = v.std(axis=0)
        scale[scale == 0] = 1.0
        scales.append(scale)
    return means, scales


def _standardize(views, means, scales):
    return [(v - mu) / s for v, mu, s in zip(views, means, scales)]


def _group_weights(views):
    return np.sqrt([v.shape[1] for v in views])


def _logistic_loss(eta, labels):
    return float(np.mean(np.logaddexp(0, eta) - labels * eta))


def penalized_objective(views, labels, weights, intercept, lam):
    """The objective in standardized coordinates."""
    eta = intercept + sum(x @ w for x, w in zip(views, weights))
    penalty = sum(
        g * np.linalg.norm(w) for g, w in zip(_group_weights(views), weights)
    )
    return _logistic_loss(eta, labels) + lam * penalty


def _lambda_max(views, labels):
    residual = labels - labels.mean()
    return max(
        np.linalg.norm(x.T @ residual) / len(labels) / g
        for x, g in zip(views, _group_weights(views))
    )


def lambda_max(dataset):
    """The smallest penalty at which every group weight is exactly zero."""
    dataset.require_labels()
    means, scales = _standardization(dataset.views)
    views = _standardize(dataset.views, means, scales)
    return _lambda_max(views, dataset.labels.astype(float)) * LAMBDA_MAX_HEADROOM


def kkt_residual(views, labels, weights, intercept, lam):
    """
    The largest violation of the optimality conditions: the intercept
    gradient, the excess gradient norm of each zero group over its penalty,
    and the stationarity residual of each active group.
    """
    eta = intercept + sum(x @ w for x, w in zip(views, weights))
    error = expit(eta) - labels
    worst = abs(float(np.mean(error)))
    for x, w, g in zip(views, weights, _group_weights(views)):
        gradient = x.T @ error / len(labels)
        norm = np.linalg.norm(w)
        if norm == 0:
            worst = max(worst, np.linalg.norm(gradient) - lam * g)
        else:
            worst = max(worst, np.linalg.norm(gradient + lam * g * w / norm))
    return worst


def _block_coordinate_descent(
    views,
    labels,
    lam,
    weights=None,
    intercept=None,
    tol=KKT_TOLERANCE,
    max_cycles=MAX_CYCLES,
    callback: Optional[Callable] = None,
):
    """
    Minimize the penalized objective from a warm start. `callback` is called
    with (weights, intercept) after every block update.
    """
    n_samples = len(labels)
    if weights is None:
        weights = [np.zeros(x.shape[1]) for x in views]
    else:
        weights = [np.array(w, dtype=float) for w in weights]
    if intercept is None:
        intercept = float(logit(labels.mean()))
    group_weights = _group_weights(views)
    lipschitz = [
        LOGISTIC_CURVATURE * np.linalg.eigvalsh(x.T @ x)[-1] / n_samples for x in views
    ]
    eta = intercept + sum(x @ w for x, w in zip(views, weights))

    for _ in range(max_cycles):
        step = float(np.mean(expit(eta) - labels)) / LOGISTIC_CURVATURE
        intercept -= step
        eta = eta - step
        if callback is not None:
            callback(weights, intercept)

        for m, x in enumerate(views):
            if lipschitz[m] <= 0:
                continue
            gradient = x.T @ (expit(eta) - labels) / n_samples
            proposal = weights[m] - gradient / lipschitz[m]
            norm = np.linalg.norm(proposal)
            threshold = lam * group_weights[m] / lipschitz[m]
            if norm <= threshold:
                updated = np.zeros_like(proposal)
            else:
                updated = (1 - threshold / norm) * proposal
            eta = eta + x @ (updated - weights[m])
            weights[m] = updated
            if callback is not None:
                callback(weights, intercept)

        if not np.all(np.isfinite(eta)):
            raise NumericalError("The group-LASSO linear predictor is not finite")
        if kkt_residual(views, labels, weights, intercept, lam) <= tol:
            break
    else:
        logger.debug(
            "Block coordinate descent stopped after %d cycles at lambda %g", max_cycles, lam
        )

    loss = _logistic_loss(eta, labels)
    if not np.isfinite(loss):
        raise NumericalError(f"The group-LASSO loss is not finite ({loss})")
    return weights, intercept


def _to_model(weights, intercept, means, scales, lam, path, cv_curve):
    original = tuple(np.array(w / s) for w, s in zip(weights, scales))
    return GLassoModel(
        intercept=float(intercept - sum(float(mu @ w) for mu, w in zip(means, original))),
        weights=original,
        lambda_selected=float(lam),
        lambda_path=tuple(float(v) for v in path),
        cv_curve=tuple(float(v) for v in cv_curve),
        feature_means=tuple(np.array(mu) for mu in means),
        feature_scales=tuple(np.array(s) for s in scales),
    )


def _check_both_classes(labels):
    if np.unique(labels).size < 2:
        raise ValidationError("The group-LASSO baseline needs both classes in the labels")


def fit_glasso_at(dataset, lam, tol=KKT_TOLERANCE, max_cycles=MAX_CYCLES):
    """Fit at a single penalty on all of the dataset."""
    dataset.require_labels()
    labels = dataset.labels.astype(float)
    _check_both_classes(labels)
    means, scales = _standardization(dataset.views)
    views = _standardize(dataset.views, means, scales)
    weights, intercept = _block_coordinate_descent(
        views, labels, lam, tol=tol, max_cycles=max_cycles
    )
    return _to_model(weights, intercept, means, scales, lam, [lam], [])


def _fit_path(views, labels, path, tol=CV_TOLERANCE, max_cycles=CV_MAX_CYCLES):
    """Warm-started fits along a decreasing penalty path."""
    weights, intercept = None, None
    fits = []
    for lam in path:
        weights, intercept = _block_coordinate_descent(
            views, labels, lam, weights, intercept, tol=tol, max_cycles=max_cycles
        )
        fits.append(([w.copy() for w in weights], intercept))
    return fits


def lambda_path(lam_max, n_lambda):
    return lam_max * np.logspace(0, np.log10(LAMBDA_RANGE), n_lambda)


def _n_folds(labels, cv_folds, logger):
    """The number of folds to use, or 0 when cross-validation is impossible."""
    minority = int(np.min(np.bincount(labels.astype(int), minlength=2)))
    if minority < 2:
        logger.warning(
            "The minority class has %d sample(s), too few to cross-validate;"
            " using the penalty %g decade(s) below lambda_max",
            minority,
            UNVALIDATED_DECADES,
        )
        return 0
    if minority < cv_folds:
        logger.warning(
            "Reducing the number of folds from %d to %d (the minority class size)",
            cv_folds,
            minority,
        )
    return min(cv_folds, minority)


def _cross_validate(dataset, labels, path, n_folds, seed, logger):
    folds = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
    losses = np.zeros((n_folds, len(path)))
    splits = folds.split(np.zeros(len(labels)), labels.astype(int))
    for fold, (train, valid) in enumerate(splits):
        raw_train = [v[train] for v in dataset.views]
        fold_means, fold_scales = _standardization(raw_train)
        train_views = _standardize(raw_train, fold_means, fold_scales)
        valid_views = _standardize([v[valid] for v in dataset.views], fold_means, fold_scales)
        if np.unique(labels[train]).size < 2:
            raise ValidationError(f"Fold {fold + 1} has a single-class training set")
        for i, (weights, intercept) in enumerate(_fit_path(train_views, labels[train], path)):
            eta = intercept + sum(x @ w for x, w in zip(valid_views, weights))
            losses[fold, i] = _logistic_loss(eta, labels[valid])
        logger.debug("Finished fold %d of %d", fold + 1, n_folds)
    cv_curve = losses.mean(axis=0)
    if not np.all(np.isfinite(cv_curve)):
        raise NumericalError("The cross-validated group-LASSO loss is not finite")
    return cv_curve


def _unvalidated_index(n_lambda):
    decades = np.log10(1 / LAMBDA_RANGE)
    return min(n_lambda - 1, int(round((n_lambda - 1) * UNVALIDATED_DECADES / decades)))


def fit_glasso(dataset, n_lambda=30, cv_folds=5, seed=0, logger=logger):
    """
    Select the penalty by stratified cross-validation (minimum mean
    validation log-loss) and refit on all samples at the selected penalty.
    When the minority class has a single sample, the penalty one decade below
    lambda_max is used without cross-validation.
    """
    dataset.require_labels()
    labels = dataset.labels.astype(float)
    _check_both_classes(labels)
    if n_lambda < 1:
        raise ValidationError(f"n_lambda must be at least 1, got {n_lambda}")
    n_folds = _n_folds(labels, cv_folds, logger)

    means, scales = _standardization(dataset.views)
    views = _standardize(dataset.views, means, scales)
    path = lambda_path(_lambda_max(views, labels) * LAMBDA_MAX_HEADROOM, n_lambda)

    if n_folds:
        cv_curve = _cross_validate(dataset, labels, path, n_folds, seed, logger)
        selected = int(np.argmin(cv_curve))
    else:
        cv_curve = np.array([])
        selected = _unvalidated_index(n_lambda)

    weights, intercept = None, None
    if selected > 0:
        weights, intercept = _fit_path(views, labels, path[:selected])[-1]
    weights, intercept = _block_coordinate_descent(
        views, labels, path[selected], weights, intercept, max_cycles=REFIT_MAX_CYCLES
    )
    active = sum(np.linalg.norm(w) > 0 for w in weights)
    logger.info(
        "Selected lambda %.4g (%d of %d on the path), %d of %d groups active",
        path[selected],
        selected + 1,
        n_lambda,
        active,
        len(weights),
    )
    return _to_model(weights, intercept, means, scales, path[selected], path, cv_curve)


def predict_glasso(model: GLassoModel, dataset):
    check_view_dims(model.view_dims, dataset)
    eta = model.intercept + sum(x @ w for x, w in zip(dataset.views, model.weights))
    return expit(eta)


def glasso_objective(model: GLassoModel, dataset, lam):
    """
    The penalized objective of `model` on `dataset`, with the penalty applied
    to the standardized coefficients the model was fitted with.
    """
    check_view_dims(model.view_dims, dataset)
    dataset.require_labels()
    eta = model.intercept + sum(x @ w for x, w in zip(dataset.views, model.weights))
    penalty = sum(
        g * np.linalg.norm(w)
        for g, w in zip(_group_weights(dataset.views), model.standardized_weights())
    )
    return _logistic_loss(eta, dataset.labels.astype(float)) + lam * penalty
