"""
Out-of-sample prediction and factor reconstructions from a trained model.

Prediction integrates the latents out analytically: under cluster c a sample
is Normal(0, W~_c W~_c^T + Psi_c) with Psi_c the diagonal noise covariance,
evaluated at the posterior means of the loadings and noise precisions.
Labels of new samples never enter the computation.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from gfamix.dataset import check_view_dims
from gfamix.errors import ValidationError
from gfamix.variational import LOG_2PI, spd_inverse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionResult:
    responsibilities: np.ndarray
    prob_class1: np.ndarray


def cluster_log_likelihoods(model, dataset):
    """log p(x_n | c) under each cluster's marginal Gaussian, N x S."""
    state = model.state
    L = state.n_factors
    tau = state.tau_mean
    log_lik = np.empty((dataset.n_samples, state.n_clusters))
    for c in range(state.n_clusters):
        precision = np.eye(L)
        projected = np.zeros((dataset.n_samples, L))
        quadratic = np.zeros(dataset.n_samples)
        log_det_noise = 0.0
        for m, view in enumerate(dataset.views):
            loadings = state.loading_mean(c, m)
            precision = precision + tau[c, m] * loadings.T @ loadings
            projected += tau[c, m] * view @ loadings
            quadratic += tau[c, m] * np.sum(view**2, axis=1)
            log_det_noise -= view.shape[1] * np.log(tau[c, m])
        covariance, log_det_cov = spd_inverse(precision)
        explained = np.einsum("ni,ij,nj->n", projected, covariance, projected)
        total_dim = sum(dataset.view_dims)
        # Woodbury identity and the matrix determinant lemma
        log_det = log_det_noise - log_det_cov
        log_lik[:, c] = -0.5 * (total_dim * LOG_2PI + log_det + quadratic - explained)
    return log_lik


def predict(model, dataset) -> PredictionResult:
    check_view_dims(model.view_dims, dataset)
    state = model.state
    scores = np.log(state.pi_mean) + cluster_log_likelihoods(model, dataset)
    responsibilities = softmax(scores, axis=1)
    prob_class1 = responsibilities @ state.gamma_mean
    return PredictionResult(responsibilities=responsibilities, prob_class1=prob_class1)


def _check_cluster(model, cluster):
    if not 0 <= cluster < model.n_clusters:
        raise ValidationError(
            f"Cluster {cluster} is out of range; the model has {model.n_clusters} cluster(s)"
        )


def reconstruct(model, cluster, include_shared=False):
    """
    The part of every training sample explained by cluster `cluster`'s own
    factors, E[Z] E[W_c]^T per view, optionally with the shared part added.
    """
    _check_cluster(model, cluster)
    state = model.state
    z = state.z_mean[:, :state.K]
    recon = [z @ w.T for w in state.w_mean[cluster]]
    if include_shared:
        shared = reconstruct_shared(model)
        recon = [r + s for r, s in zip(recon, shared)]
    return recon


def reconstruct_shared(model):
    state = model.state
    z_hat = state.z_mean[:, state.K:]
    return [z_hat @ w.T for w in state.what_mean]


def trial_average(recon, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("Cannot average over an empty set of trials")
    return [r[mask].mean(axis=0) for r in recon]


def hard_assignments(model):
    return np.argmax(model.state.resp, axis=1)


def cluster_masks(model):
    """
    Trials whose most responsible cluster is c. A cluster that owns no trial
    falls back to every trial.
    """
    assignments = hard_assignments(model)
    masks = []
    for c in range(model.n_clusters):
        mask = assignments == c
        if not mask.any():
            logger.info("Cluster %d owns no trial; averaging over all trials", c + 1)
            mask = np.ones_like(mask)
        masks.append(mask)
    return masks


def _diff_name(i, j, n_clusters):
    return "diff" if n_clusters == 2 else f"diff_{i + 1}_{j + 1}"


def cluster_erps(model, dataset=None):
    """
    Trial-averaged reconstructions ("event-related potentials") per view:
    one panel per cluster from its own factors, one from the shared factors
    and the pairwise differences between cluster panels. When the training
    `dataset` is given, the raw trial averages over the same trials are
    added for comparison.
    """
    masks = cluster_masks(model)
    all_trials = np.ones(model.state.n_samples, dtype=bool)
    panels = {}
    for c, mask in enumerate(masks):
        panels[f"cluster{c + 1}"] = trial_average(reconstruct(model, c), mask)
    panels["shared"] = trial_average(reconstruct_shared(model), all_trials)
    for i in range(model.n_clusters):
        for j in range(i + 1, model.n_clusters):
            panels[_diff_name(i, j, model.n_clusters)] = [
                a - b for a, b in zip(panels[f"cluster{i + 1}"], panels[f"cluster{j + 1}"])
            ]
    if dataset is not None:
        check_view_dims(model.view_dims, dataset)
        if dataset.n_samples != model.state.n_samples:
            raise ValidationError(
                f"The dataset has {dataset.n_samples} samples, the model was trained"
                f" on {model.state.n_samples}"
            )
        for c, mask in enumerate(masks):
            panels[f"data_cluster{c + 1}"] = trial_average(list(dataset.views), mask)
    return panels
