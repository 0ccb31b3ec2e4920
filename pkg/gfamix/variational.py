"""
Mean-field variational posterior of the classifying GFA mixture and its
coordinate-ascent updates.

The posterior factorizes as

    q(c) q(pi) q(Z) q(W_hat) q(alpha_hat)
        prod_{c,m} q(W_c^(m)) q(tau_c^(m)) q(alpha_c^(m)) prod_c q(gamma_c)

where q(Z) holds one joint Gaussian per sample over the concatenated latent
y_n = [z_n; z_hat_n] (cluster-specific block first). Rows of a loading matrix
share one covariance, stored once per (cluster, view). Each update below is
the exact maximizer of `elbo` with respect to its factor, so the bound never
decreases under any sequence of updates. The label likelihood is raised to
the power `beta_weight` everywhere, including the bound.
"""

import logging
from dataclasses import dataclass, fields, replace
from typing import List, Optional

import numpy as np
from scipy import stats
from scipy.special import betaln, digamma, entr, gammaln, softmax

from gfamix.errors import NumericalError, ValidationError
from gfamix.model import Hyperparameters

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class VariationalState:
    hyper: Hyperparameters
    resp: np.ndarray
    z_mean: np.ndarray
    z_cov: np.ndarray
    w_mean: List[List[np.ndarray]]
    w_cov: np.ndarray
    what_mean: List[np.ndarray]
    what_cov: np.ndarray
    alpha_shape: np.ndarray
    alpha_rate: np.ndarray
    alpha_hat_shape: np.ndarray
    alpha_hat_rate: np.ndarray
    tau_shape: np.ndarray
    tau_rate: np.ndarray
    pi_conc: np.ndarray
    gamma_a: np.ndarray
    gamma_b: np.ndarray
    # contribution of pruned factors, held constant once they are removed
    pruned_bound: float = 0.0

    @property
    def K(self):
        return self.w_cov.shape[-1]

    @property
    def K_hat(self):
        return self.what_cov.shape[-1]

    @property
    def n_factors(self):
        return self.K + self.K_hat

    @property
    def n_clusters(self):
        return self.resp.shape[1]

    @property
    def n_samples(self):
        return self.resp.shape[0]

    @property
    def view_dims(self):
        return tuple(w.shape[0] for w in self.what_mean)

    @property
    def tau_mean(self):
        return self.tau_shape / self.tau_rate

    @property
    def log_tau_mean(self):
        return digamma(self.tau_shape) - np.log(self.tau_rate)

    @property
    def alpha_mean(self):
        return self.alpha_shape / self.alpha_rate

    @property
    def log_alpha_mean(self):
        return digamma(self.alpha_shape) - np.log(self.alpha_rate)

    @property
    def alpha_hat_mean(self):
        return self.alpha_hat_shape / self.alpha_hat_rate

    @property
    def log_alpha_hat_mean(self):
        return digamma(self.alpha_hat_shape) - np.log(self.alpha_hat_rate)

    @property
    def log_pi_mean(self):
        return digamma(self.pi_conc) - digamma(self.pi_conc.sum())

    @property
    def pi_mean(self):
        return self.pi_conc / self.pi_conc.sum()

    @property
    def log_gamma_mean(self):
        return digamma(self.gamma_a) - digamma(self.gamma_a + self.gamma_b)

    @property
    def log_one_minus_gamma_mean(self):
        return digamma(self.gamma_b) - digamma(self.gamma_a + self.gamma_b)

    @property
    def gamma_mean(self):
        return self.gamma_a / (self.gamma_a + self.gamma_b)

    def latent_second_moments(self):
        """E[y_n y_n^T] for every sample, N x L x L."""
        return self.z_cov + np.einsum("ni,nj->nij", self.z_mean, self.z_mean)

    def loading_mean(self, c, m):
        """E[W~_c^(m)] = [E[W_c^(m)], E[W_hat^(m)]], D_m x L."""
        return np.hstack([self.w_mean[c][m], self.what_mean[m]])

    def loading_second_moment(self, c, m):
        """E[W~^T W~] for cluster c and view m, including the row covariances."""
        w, w_hat = self.w_mean[c][m], self.what_mean[m]
        dim = w_hat.shape[0]
        K = self.K
        moment = np.empty((self.n_factors, self.n_factors))
        moment[:K, :K] = w.T @ w + dim * self.w_cov[c, m]
        moment[K:, K:] = w_hat.T @ w_hat + dim * self.what_cov[m]
        moment[:K, K:] = w.T @ w_hat
        moment[K:, :K] = moment[:K, K:].T
        return moment

    def column_sq_norms(self):
        """E[||w_{c,k}^(m)||^2] as S x M x K and E[||w_hat_k^(m)||^2] as M x K_hat."""
        specific = np.empty(self.alpha_shape.shape)
        for c in range(self.n_clusters):
            for m, dim in enumerate(self.view_dims):
                specific[c, m] = np.sum(self.w_mean[c][m] ** 2, axis=0) + dim * np.diagonal(
                    self.w_cov[c, m]
                )
        shared = np.empty(self.alpha_hat_shape.shape)
        for m, dim in enumerate(self.view_dims):
            shared[m] = np.sum(self.what_mean[m] ** 2, axis=0) + dim * np.diagonal(
                self.what_cov[m]
            )
        return specific, shared

    def expected_sq_residuals(self, dataset):
        """
        E||x_n^(m) - W~_c^(m) y_n||^2 for every sample, cluster and view, as an
        N x S x M array.
        """
        moments = self.latent_second_moments()
        residuals = np.empty((self.n_samples, self.n_clusters, len(self.view_dims)))
        for m, view in enumerate(dataset.views):
            x_sq = np.sum(view**2, axis=1)
            for c in range(self.n_clusters):
                cross = np.sum((view @ self.loading_mean(c, m)) * self.z_mean, axis=1)
                trace = np.einsum("ij,nij->n", self.loading_second_moment(c, m), moments)
                residuals[:, c, m] = x_sq - 2 * cross + trace
        return residuals

    def frozen(self):
        """
        Return a copy whose arrays are C-contiguous and read-only, so the state
        can be shared and evaluates identically after a save/load round trip.
        """

        def freeze(value):
            if isinstance(value, np.ndarray):
                array = np.array(value, dtype=float, order="C", copy=True)
                array.setflags(write=False)
                return array
            if isinstance(value, list):
                return [freeze(v) for v in value]
            return value

        return replace(
            self,
            **{f.name: freeze(getattr(self, f.name)) for f in fields(self) if f.name != "hyper"},
        )


def spd_inverse(precision):
    """
    Invert a (stack of) symmetric positive definite matrices through their
    Cholesky factors. Returns the covariances and their log-determinants.
    """
    precision = np.asarray(precision, dtype=float)
    batch_shape = precision.shape[:-2]
    if precision.shape[-1] == 0:
        return np.zeros(precision.shape), np.zeros(batch_shape)
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        raise NumericalError("A precision matrix is not positive definite")
    chol_inv = np.linalg.inv(chol)
    covariance = np.swapaxes(chol_inv, -1, -2) @ chol_inv
    covariance = 0.5 * (covariance + np.swapaxes(covariance, -1, -2))
    log_det = -2 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return covariance, log_det


def _labels(dataset, labels):
    if labels is None:
        dataset.require_labels()
        labels = dataset.labels
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (dataset.n_samples,):
        raise ValidationError("label length mismatch")
    return labels


def update_latents(state: VariationalState, dataset):
    L = state.n_factors
    tau = state.tau_mean
    weighted_moments = np.zeros((state.n_clusters, L, L))
    linear = np.zeros((state.n_samples, L))
    for c in range(state.n_clusters):
        for m, view in enumerate(dataset.views):
            weighted_moments[c] += tau[c, m] * state.loading_second_moment(c, m)
            linear += state.resp[:, [c]] * (tau[c, m] * (view @ state.loading_mean(c, m)))
    precision = np.eye(L) + np.einsum("nc,cij->nij", state.resp, weighted_moments)
    covariance, _ = spd_inverse(precision)
    mean = np.einsum("nij,nj->ni", covariance, linear)
    return replace(state, z_mean=mean, z_cov=covariance)


def update_loadings(state: VariationalState, dataset):
    """
    Update every cluster-specific loading matrix, then the shared ones. The
    shared block enters the cluster-specific update (and vice versa) through
    the cross moments E[z_n z_hat_n^T].
    """
    K = state.K
    own, shared = slice(0, K), slice(K, state.n_factors)
    tau = state.tau_mean
    alpha = state.alpha_mean
    moments = np.einsum("nc,nij->cij", state.resp, state.latent_second_moments())

    w_mean = [list(row) for row in state.w_mean]
    w_cov = np.array(state.w_cov, copy=True)
    for c in range(state.n_clusters):
        weighted_z = state.resp[:, [c]] * state.z_mean[:, own]
        for m, view in enumerate(dataset.views):
            precision = np.diag(alpha[c, m]) + tau[c, m] * moments[c][own, own]
            covariance, _ = spd_inverse(precision)
            target = view.T @ weighted_z - state.what_mean[m] @ moments[c][shared, own]
            w_mean[c][m] = tau[c, m] * target @ covariance
            w_cov[c, m] = covariance

    alpha_hat = state.alpha_hat_mean
    what_mean = list(state.what_mean)
    what_cov = np.array(state.what_cov, copy=True)
    for m, view in enumerate(dataset.views):
        precision = np.diag(alpha_hat[m])
        target = np.zeros(state.what_mean[m].shape)
        for c in range(state.n_clusters):
            precision = precision + tau[c, m] * moments[c][shared, shared]
            weighted_z = state.resp[:, [c]] * state.z_mean[:, shared]
            target += tau[c, m] * (view.T @ weighted_z - w_mean[c][m] @ moments[c][own, shared])
        covariance, _ = spd_inverse(precision)
        what_mean[m] = target @ covariance
        what_cov[m] = covariance

    return replace(
        state, w_mean=w_mean, w_cov=w_cov, what_mean=what_mean, what_cov=what_cov
    )


def update_ard(state: VariationalState):
    hyper = state.hyper
    dims = np.array(state.view_dims, dtype=float)
    specific, shared = state.column_sq_norms()
    alpha_shape = np.broadcast_to(
        hyper.ard_shape + dims[None, :, None] / 2, state.alpha_shape.shape
    ).copy()
    alpha_rate = hyper.ard_rate + specific / 2
    alpha_hat_shape = np.broadcast_to(
        hyper.shared_ard_shape + dims[:, None] / 2, state.alpha_hat_shape.shape
    ).copy()
    alpha_hat_rate = hyper.shared_ard_rate + shared / 2
    return replace(
        state,
        alpha_shape=alpha_shape,
        alpha_rate=alpha_rate,
        alpha_hat_shape=alpha_hat_shape,
        alpha_hat_rate=alpha_hat_rate,
    )


def update_noise(state: VariationalState, dataset):
    hyper = state.hyper
    dims = np.array(state.view_dims, dtype=float)
    counts = state.resp.sum(axis=0)
    residuals = np.einsum("nc,ncm->cm", state.resp, state.expected_sq_residuals(dataset))
    tau_shape = hyper.noise_shape + counts[:, None] * dims[None, :] / 2
    tau_rate = hyper.noise_rate + residuals / 2
    return replace(state, tau_shape=tau_shape, tau_rate=tau_rate)


def assignment_log_weights(state: VariationalState, dataset, labels):
    """Unnormalized log responsibilities, N x S."""
    dims = np.array(state.view_dims, dtype=float)
    residuals = state.expected_sq_residuals(dataset)
    log_lik = np.sum(
        dims * (state.log_tau_mean - LOG_2PI) / 2
        - state.tau_mean * residuals / 2,
        axis=2,
    )
    log_label = labels[:, None] * state.log_gamma_mean + (1 - labels[:, None]) * (
        state.log_one_minus_gamma_mean
    )
    return state.log_pi_mean + state.hyper.beta_weight * log_label + log_lik


def update_assignments(state: VariationalState, dataset, labels=None):
    labels = _labels(dataset, labels)
    log_weights = assignment_log_weights(state, dataset, labels)
    row_max = np.max(log_weights, axis=1)
    if not np.all(np.isfinite(row_max)) or np.any(np.isnan(log_weights)):
        bad = np.flatnonzero(~np.isfinite(row_max) | np.any(np.isnan(log_weights), axis=1))
        raise NumericalError(
            f"Responsibilities are undefined for {bad.size} sample(s), first {bad[0]}"
        )
    return replace(state, resp=softmax(log_weights, axis=1))


def update_mixture_weights(state: VariationalState):
    return replace(state, pi_conc=state.hyper.dirichlet_conc + state.resp.sum(axis=0))


def update_label_probs(state: VariationalState, labels):
    labels = np.asarray(labels, dtype=float)
    beta = state.hyper.beta_weight
    positives = state.resp.T @ labels
    negatives = state.resp.T @ (1 - labels)
    return replace(
        state,
        gamma_a=state.hyper.beta_a + beta * positives,
        gamma_b=state.hyper.beta_b + beta * negatives,
    )


def _gamma_prior_term(shape0, rate0, shape, rate):
    """E_q[log Gamma(x; shape0, rate0)] under q = Gamma(shape, rate), summed."""
    log_mean = digamma(shape) - np.log(rate)
    return np.sum(
        shape0 * np.log(rate0) - gammaln(shape0) + (shape0 - 1) * log_mean
        - rate0 * shape / rate
    )


def _gamma_entropy(shape, rate):
    return np.sum(stats.gamma.entropy(shape, scale=1 / rate))


def _data_terms(state: VariationalState, dataset, labels):
    """The Gaussian and the weighted label likelihoods."""
    dims = np.array(state.view_dims, dtype=float)
    resp = state.resp
    counts = resp.sum(axis=0)
    residuals = np.einsum("nc,ncm->cm", resp, state.expected_sq_residuals(dataset))
    bound = np.sum(
        counts[:, None] * dims * (state.log_tau_mean - LOG_2PI) / 2
        - state.tau_mean * residuals / 2
    )
    log_label = labels[:, None] * state.log_gamma_mean + (1 - labels[:, None]) * (
        state.log_one_minus_gamma_mean
    )
    return bound + state.hyper.beta_weight * np.sum(resp * log_label)


def model_terms(state: VariationalState):
    """
    Every term of the bound that does not touch the data: priors and
    entropies, plus the carried contribution of pruned factors.
    """
    hyper = state.hyper
    dims = np.array(state.view_dims, dtype=float)
    L = state.n_factors
    resp = state.resp

    bound = np.sum(resp @ state.log_pi_mean) + np.sum(entr(resp))

    n_clusters = state.n_clusters
    bound += (
        gammaln(n_clusters * hyper.dirichlet_conc)
        - n_clusters * gammaln(hyper.dirichlet_conc)
        + (hyper.dirichlet_conc - 1) * np.sum(state.log_pi_mean)
    )
    bound += stats.dirichlet.entropy(state.pi_conc)

    bound += np.sum(
        -betaln(hyper.beta_a, hyper.beta_b)
        + (hyper.beta_a - 1) * state.log_gamma_mean
        + (hyper.beta_b - 1) * state.log_one_minus_gamma_mean
    )
    bound += np.sum(stats.beta.entropy(state.gamma_a, state.gamma_b))

    _, z_log_det = np.linalg.slogdet(state.z_cov)
    bound += -0.5 * np.sum(np.trace(state.latent_second_moments(), axis1=1, axis2=2))
    bound += 0.5 * np.sum(z_log_det) + state.n_samples * L / 2

    specific, shared = state.column_sq_norms()
    bound += np.sum(
        dims[None, :, None] * (state.log_alpha_mean - LOG_2PI) / 2
        - state.alpha_mean * specific / 2
    )
    bound += np.sum(
        dims[:, None] * (state.log_alpha_hat_mean - LOG_2PI) / 2
        - state.alpha_hat_mean * shared / 2
    )
    if state.K:
        _, w_log_det = np.linalg.slogdet(state.w_cov)
        bound += np.sum(dims * (state.K * (1 + LOG_2PI) + w_log_det) / 2)
    if state.K_hat:
        _, what_log_det = np.linalg.slogdet(state.what_cov)
        bound += np.sum(dims * (state.K_hat * (1 + LOG_2PI) + what_log_det) / 2)

    bound += _gamma_prior_term(hyper.ard_shape, hyper.ard_rate, state.alpha_shape, state.alpha_rate)
    bound += _gamma_entropy(state.alpha_shape, state.alpha_rate)
    bound += _gamma_prior_term(
        hyper.shared_ard_shape, hyper.shared_ard_rate, state.alpha_hat_shape, state.alpha_hat_rate
    )
    bound += _gamma_entropy(state.alpha_hat_shape, state.alpha_hat_rate)
    bound += _gamma_prior_term(hyper.noise_shape, hyper.noise_rate, state.tau_shape, state.tau_rate)
    bound += _gamma_entropy(state.tau_shape, state.tau_rate)
    return float(bound) + state.pruned_bound


def elbo(state: VariationalState, dataset, labels: Optional[np.ndarray] = None):
    """
    The evidence lower bound with the label likelihood weighted by
    `beta_weight`, i.e. E_q[log p(X, r^beta, Theta)] - E_q[log q(Theta)].
    """
    labels = _labels(dataset, labels)
    bound = float(_data_terms(state, dataset, labels)) + model_terms(state)
    if not np.isfinite(bound):
        raise NumericalError(f"The evidence lower bound is not finite ({bound})")
    return bound
