"""
Small builders for datasets, hyperparameters, states and models used by the
test-suite and for quick experiments in a shell.
"""

import numpy as np

from gfamix.dataset import validate_dataset
from gfamix.inference import TrainedModel, initialize, run_update_cycle
from gfamix.model import (
    GenerativeParams,
    default_hyperparameters,
    make_weak_signal_benchmark,
    sample_generative,
)


def mock_hyperparameters(K=1, K_hat=1, S=2, **kwargs):
    return default_hyperparameters(K, K_hat, S, **kwargs)


def mock_views(N=20, dims=(3, 2), seed=0):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal((N, d)) for d in dims]


def mock_labels(N=20):
    return np.arange(N) % 2


def mock_dataset(N=20, dims=(3, 2), seed=0, labels=True):
    views = mock_views(N, dims, seed)
    return validate_dataset(views, mock_labels(N) if labels else None)


def mock_params(K=1, K_hat=1, dims=(3, 2), seed=0, tau=1.0, separation=3.0):
    """
    Two clusters with distinct cluster-specific loadings, opposite labels and
    equal weights.
    """
    rng = np.random.default_rng(seed)
    W_hat = [rng.standard_normal((d, K_hat)) for d in dims]
    W = [[separation * rng.standard_normal((d, K)) for d in dims] for _ in range(2)]
    return GenerativeParams(
        W=W,
        W_hat=W_hat,
        tau=np.full((2, len(dims)), float(tau)),
        pi=np.array([0.5, 0.5]),
        gamma=np.array([1.0, 0.0]),
    )


def mock_mixture_dataset(N=60, K=1, K_hat=1, dims=(3, 2), seed=0, **kwargs):
    params = mock_params(K, K_hat, dims, seed, **kwargs)
    hyper = default_hyperparameters(K, K_hat, 2)
    dataset, latents = sample_generative(params, hyper, N, seed + 1)
    return params, dataset, latents


def mock_state(dataset=None, hyper=None, seed=0, n_cycles=1):
    """An initialized state after `n_cycles` full update cycles."""
    dataset = mock_dataset() if dataset is None else dataset
    hyper = mock_hyperparameters() if hyper is None else hyper
    state = initialize(dataset, hyper, seed)
    for _ in range(n_cycles):
        state = run_update_cycle(state, dataset)
    return state


def mock_model(state, dataset, elbo_trace=(0.0,), converged=True):
    return TrainedModel(
        hyper=state.hyper,
        state=state,
        elbo_trace=tuple(elbo_trace),
        n_iterations=len(elbo_trace),
        converged=converged,
        view_dims=dataset.view_dims,
        view_names=dataset.view_names,
    )


def mock_benchmark(N=40, M=2, D=3, seed=0, **kwargs):
    return make_weak_signal_benchmark(N, M, D, seed, **kwargs)
