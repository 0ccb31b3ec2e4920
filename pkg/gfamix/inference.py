"""
Fitting the classifying GFA mixture: initialization, the coordinate-ascent
loop and ARD pruning of irrelevant factors.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np
from sklearn.cluster import KMeans

from gfamix.errors import ValidationError
from gfamix.model import Hyperparameters
from gfamix.variational import (
    VariationalState,
    elbo,
    model_terms,
    update_ard,
    update_assignments,
    update_label_probs,
    update_latents,
    update_loadings,
    update_mixture_weights,
    update_noise,
)

logger = logging.getLogger(__name__)

INIT_LOADING_SCALE = 0.01
INIT_WINNER_RESPONSIBILITY = 0.9
PRUNE_EVERY = 10


@dataclass(frozen=True)
class TrainedModel:
    hyper: Hyperparameters
    state: VariationalState
    elbo_trace: Tuple[float, ...]
    n_iterations: int
    converged: bool
    view_dims: Tuple[int, ...]
    view_names: Tuple[str, ...]

    @property
    def n_clusters(self):
        return self.state.n_clusters


UPDATE_CYCLE = [
    ("latents", lambda state, dataset: update_latents(state, dataset)),
    ("loadings", lambda state, dataset: update_loadings(state, dataset)),
    ("ard", lambda state, dataset: update_ard(state)),
    ("noise", lambda state, dataset: update_noise(state, dataset)),
    ("assignments", lambda state, dataset: update_assignments(state, dataset)),
    ("mixture_weights", lambda state, dataset: update_mixture_weights(state)),
    ("label_probs", lambda state, dataset: update_label_probs(state, dataset.labels)),
]


def run_update_cycle(state, dataset, on_update: Optional[Callable] = None):
    """
    Apply every coordinate update once in the fixed order. `on_update` is
    called with the update's name and the new state after each step.
    """
    for name, update in UPDATE_CYCLE:
        state = update(state, dataset)
        if on_update is not None:
            on_update(name, state)
    return state.frozen()


def _standardized(data):
    scale = data.std(axis=0)
    scale[scale == 0] = 1.0
    return (data - data.mean(axis=0)) / scale


def initialize(dataset, hyper: Hyperparameters, seed) -> VariationalState:
    """
    Responsibilities come from k-means on the standardized concatenated
    views, latent means from its truncated SVD, loading means are small
    random draws, and every Gamma, Beta and Dirichlet factor starts at its
    prior.
    """
    dataset.require_labels()
    data = dataset.concatenated()
    n_samples = dataset.n_samples
    S, K, K_hat, L = hyper.S, hyper.K, hyper.K_hat, hyper.n_factors
    M = dataset.n_views

    distinct = np.unique(data, axis=0).shape[0]
    if distinct < S:
        raise ValidationError(
            f"Cannot initialize {S} clusters from {distinct} distinct sample(s)"
        )

    standardized = _standardized(data)
    if S == 1:
        resp = np.ones((n_samples, 1))
    else:
        clustering = KMeans(n_clusters=S, init="k-means++", n_init=1, random_state=seed)
        winners = clustering.fit_predict(standardized)
        resp = np.full((n_samples, S), (1 - INIT_WINNER_RESPONSIBILITY) / (S - 1))
        resp[np.arange(n_samples), winners] = INIT_WINNER_RESPONSIBILITY

    u, _, _ = np.linalg.svd(standardized, full_matrices=False)
    z_mean = np.zeros((n_samples, L))
    rank = min(L, u.shape[1])
    z_mean[:, :rank] = u[:, :rank] * np.sqrt(n_samples)

    rng = np.random.default_rng(seed)
    w_mean = [
        [INIT_LOADING_SCALE * rng.standard_normal((dim, K)) for dim in dataset.view_dims]
        for _ in range(S)
    ]
    what_mean = [
        INIT_LOADING_SCALE * rng.standard_normal((dim, K_hat)) for dim in dataset.view_dims
    ]

    state = VariationalState(
        hyper=hyper,
        resp=resp,
        z_mean=z_mean,
        z_cov=np.broadcast_to(np.eye(L), (n_samples, L, L)).copy(),
        w_mean=w_mean,
        w_cov=np.broadcast_to(np.eye(K), (S, M, K, K)).copy(),
        what_mean=what_mean,
        what_cov=np.broadcast_to(np.eye(K_hat), (M, K_hat, K_hat)).copy(),
        alpha_shape=np.full((S, M, K), hyper.ard_shape),
        alpha_rate=np.full((S, M, K), hyper.ard_rate),
        alpha_hat_shape=np.full((M, K_hat), hyper.shared_ard_shape),
        alpha_hat_rate=np.full((M, K_hat), hyper.shared_ard_rate),
        tau_shape=np.full((S, M), hyper.noise_shape),
        tau_rate=np.full((S, M), hyper.noise_rate),
        pi_conc=np.full(S, hyper.dirichlet_conc),
        gamma_a=np.full(S, hyper.beta_a),
        gamma_b=np.full(S, hyper.beta_b),
    )
    return state.frozen()


def prune_factors(
    state: VariationalState,
    hyper: Optional[Hyperparameters] = None,
    dataset=None,
    logger=logger,
):
    """
    Remove factors whose ARD variance 1/E[alpha] is below the prune
    threshold. A shared factor goes when it is irrelevant in every view; a
    cluster-specific factor goes only when it is irrelevant in every cluster
    and every view, since all clusters share the latent z. Pruning that
    would leave no factor at all is refused.

    The removed factors' share of the bound is carried as a constant in
    `pruned_bound`, so bounds before and after pruning stay comparable. With
    `dataset` that share is exact; without it, only their prior and entropy
    terms are carried and their (vanishing) likelihood contribution is lost.
    """
    hyper = state.hyper if hyper is None else hyper
    threshold = hyper.prune_threshold
    if threshold is None:
        return state

    specific_variance = 1 / state.alpha_mean
    shared_variance = 1 / state.alpha_hat_mean
    keep_specific = ~np.all(specific_variance < threshold, axis=(0, 1))
    keep_shared = ~np.all(shared_variance < threshold, axis=0)
    if np.all(keep_specific) and np.all(keep_shared):
        return state
    if not np.any(keep_specific) and not np.any(keep_shared):
        logger.warning("Every factor is below the prune threshold %g; keeping them all", threshold)
        return state

    specific_index = np.flatnonzero(keep_specific)
    shared_index = np.flatnonzero(keep_shared)
    latent_index = np.concatenate([specific_index, state.K + shared_index])
    for k in np.flatnonzero(~keep_specific):
        logger.info("Pruning cluster-specific factor %d", k)
    for k in np.flatnonzero(~keep_shared):
        logger.info("Pruning shared factor %d", k)

    pruned = replace(
        state,
        hyper=state.hyper.with_counts(K=specific_index.size, K_hat=shared_index.size),
        z_mean=state.z_mean[:, latent_index],
        z_cov=state.z_cov[:, latent_index][:, :, latent_index],
        w_mean=[[w[:, specific_index] for w in row] for row in state.w_mean],
        w_cov=state.w_cov[:, :, specific_index][:, :, :, specific_index],
        what_mean=[w[:, shared_index] for w in state.what_mean],
        what_cov=state.what_cov[:, shared_index][:, :, shared_index],
        alpha_shape=state.alpha_shape[:, :, specific_index],
        alpha_rate=state.alpha_rate[:, :, specific_index],
        alpha_hat_shape=state.alpha_hat_shape[:, shared_index],
        alpha_hat_rate=state.alpha_hat_rate[:, shared_index],
    )
    if dataset is None:
        carried = model_terms(state) - model_terms(pruned)
    else:
        carried = elbo(state, dataset) - elbo(pruned, dataset)
    return replace(pruned, pruned_bound=state.pruned_bound + carried).frozen()


def fit(dataset, hyper: Hyperparameters, seed, logger=logger, callback: Optional[Callable] = None):
    """
    Run coordinate ascent until the relative change of the bound drops below
    `hyper.elbo_rel_tol` or `hyper.max_iter` cycles have run. `callback`, if
    given, receives the iteration number, the state and the bound after each
    cycle.
    """
    dataset.require_labels()
    state = initialize(dataset, hyper, seed)
    logger.info(
        "Fitting %d cluster(s) with K=%d and K_hat=%d on %d samples and %d views",
        hyper.S,
        hyper.K,
        hyper.K_hat,
        dataset.n_samples,
        dataset.n_views,
    )

    trace = []
    converged = False
    for iteration in range(1, hyper.max_iter + 1):
        due = iteration > 1 and (iteration - 1) % PRUNE_EVERY == 0
        if hyper.prune_threshold is not None and due:
            state = prune_factors(state, hyper, dataset, logger=logger)
        state = run_update_cycle(state, dataset)
        value = elbo(state, dataset)
        if trace and value < trace[-1] - 1e-8 * abs(trace[-1]):
            logger.warning(
                "The bound decreased from %.10g to %.10g at iteration %d",
                trace[-1],
                value,
                iteration,
            )
        trace.append(value)
        if callback is not None:
            callback(iteration, state, value)
        if len(trace) > 1 and abs(value - trace[-2]) < hyper.elbo_rel_tol * abs(value):
            converged = True
            break
        logger.debug("Iteration %d: bound %.10g", iteration, value)

    if converged:
        logger.info("Converged after %d iterations (bound %.10g)", len(trace), trace[-1])
    else:
        logger.warning("Stopped after %d iterations without converging", len(trace))

    return TrainedModel(
        hyper=state.hyper,
        state=state,
        elbo_trace=tuple(trace),
        n_iterations=len(trace),
        converged=converged,
        view_dims=dataset.view_dims,
        view_names=dataset.view_names,
    )
