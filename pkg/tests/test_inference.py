import logging
from dataclasses import replace

import numpy as np
from pytest import approx, raises
from sklearn.metrics import adjusted_rand_score

from gfamix.dataset import validate_dataset
from gfamix.errors import ValidationError
from gfamix.inference import fit, initialize, prune_factors
from gfamix.mocks import (
    mock_benchmark,
    mock_dataset,
    mock_hyperparameters,
    mock_mixture_dataset,
    mock_state,
)
from gfamix.predict import hard_assignments
from gfamix.variational import elbo


def test_initialize_shapes_and_priors():
    dataset = mock_dataset(N=30, dims=(3, 2))
    hyper = mock_hyperparameters(K=2, K_hat=1, S=3)
    state = initialize(dataset, hyper, seed=0)
    assert state.resp.shape == (30, 3)
    np.testing.assert_allclose(state.resp.sum(axis=1), 1.0)
    assert set(np.round(state.resp.ravel(), 12)) == {0.05, 0.9}
    assert state.z_mean.shape == (30, 3)
    assert state.z_cov.shape == (30, 3, 3)
    assert [w.shape for w in state.w_mean[2]] == [(3, 2), (2, 2)]
    assert [w.shape for w in state.what_mean] == [(3, 1), (2, 1)]
    np.testing.assert_array_equal(state.tau_shape, hyper.noise_shape)
    np.testing.assert_array_equal(state.alpha_hat_shape, hyper.shared_ard_shape)
    np.testing.assert_array_equal(state.pi_conc, hyper.dirichlet_conc)
    np.testing.assert_array_equal(state.gamma_a, hyper.beta_a)


def test_initialize_single_cluster():
    state = initialize(mock_dataset(), mock_hyperparameters(S=1), seed=0)
    np.testing.assert_array_equal(state.resp, 1.0)


def test_initialize_is_deterministic():
    dataset = mock_dataset()
    hyper = mock_hyperparameters()
    first = initialize(dataset, hyper, seed=3)
    second = initialize(dataset, hyper, seed=3)
    np.testing.assert_array_equal(first.resp, second.resp)
    np.testing.assert_array_equal(first.z_mean, second.z_mean)
    for a, b in zip(first.what_mean, second.what_mean):
        np.testing.assert_array_equal(a, b)


def test_initialize_too_few_samples():
    dataset = validate_dataset([np.arange(6.0).reshape(3, 2)], [0, 1, 0])
    with raises(ValidationError) as err:
        initialize(dataset, mock_hyperparameters(S=5), seed=0)
    assert "Cannot initialize 5 clusters from 3 distinct sample(s)" in str(err.value)


def test_initialize_duplicate_samples():
    dataset = validate_dataset([np.ones((4, 2))], [0, 1, 0, 1])
    with raises(ValidationError):
        initialize(dataset, mock_hyperparameters(S=2), seed=0)


def test_fit_requires_labels():
    with raises(ValidationError):
        fit(mock_dataset(labels=False), mock_hyperparameters(), seed=0)


def test_fit_trace_is_monotone():
    _, dataset, _ = mock_mixture_dataset(N=60)
    model = fit(dataset, mock_hyperparameters(max_iter=40), seed=0)
    trace = np.array(model.elbo_trace)
    assert model.n_iterations == len(trace)
    assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[1:]))
    assert model.view_dims == dataset.view_dims
    assert model.view_names == dataset.view_names


def test_fit_same_seed_same_model():
    _, dataset, _ = mock_mixture_dataset(N=40)
    hyper = mock_hyperparameters(max_iter=15)
    first = fit(dataset, hyper, seed=7)
    second = fit(dataset, hyper, seed=7)
    assert first.elbo_trace == second.elbo_trace
    np.testing.assert_array_equal(first.state.resp, second.state.resp)
    np.testing.assert_array_equal(first.state.z_mean, second.state.z_mean)


def test_fit_stops_at_max_iter(caplog):
    _, dataset, _ = mock_mixture_dataset(N=40)
    hyper = mock_hyperparameters(max_iter=3, elbo_rel_tol=1e-300)
    with caplog.at_level(logging.WARNING, logger="gfamix"):
        model = fit(dataset, hyper, seed=0)
    assert not model.converged
    assert model.n_iterations == 3
    assert "without converging" in caplog.text


def test_fit_callback_sees_every_iteration():
    _, dataset, _ = mock_mixture_dataset(N=40)
    seen = []

    def callback(iteration, state, value):
        seen.append((iteration, value))

    model = fit(dataset, mock_hyperparameters(max_iter=5), seed=0, callback=callback)
    assert [i for i, _ in seen] == list(range(1, model.n_iterations + 1))
    assert tuple(v for _, v in seen) == model.elbo_trace


def test_fit_recovers_label_aligned_clusters():
    _, dataset, latents = mock_mixture_dataset(N=100, seed=2)
    model = fit(dataset, mock_hyperparameters(max_iter=200), seed=0)
    assert adjusted_rand_score(latents.c, hard_assignments(model)) >= 0.9


def rank_one_dataset():
    rng = np.random.default_rng(0)
    z = rng.standard_normal((200, 1))
    w = rng.standard_normal((1, 5))
    x = z @ w + 0.1 * rng.standard_normal((200, 5))
    return validate_dataset([x], np.arange(200) % 2)


def rank_one_hyperparameters(**kwargs):
    return mock_hyperparameters(K=3, K_hat=0, S=1, elbo_rel_tol=1e-300, **kwargs)


def test_fit_ard_switches_off_unused_factors():
    dataset = rank_one_dataset()
    model = fit(dataset, rank_one_hyperparameters(max_iter=300), seed=0)
    alpha = np.sort(model.state.alpha_mean[0, 0])
    assert alpha[1] > 100 * alpha[0]
    assert 1 / alpha[-1] < 1e-6


def test_prune_factors_carries_their_share_of_the_bound():
    dataset = rank_one_dataset()
    model = fit(dataset, rank_one_hyperparameters(max_iter=100), seed=0)
    before = elbo(model.state, dataset)
    hyper = replace(model.hyper, prune_threshold=1e-4)

    pruned = prune_factors(model.state, hyper, dataset)
    assert pruned.K < model.state.K
    assert pruned.pruned_bound != 0
    assert elbo(pruned, dataset) == approx(before, rel=1e-6)

    data_free = prune_factors(model.state, hyper)
    assert data_free.K == pruned.K
    assert elbo(data_free, dataset) == approx(before, rel=1e-3)


def test_fit_bound_is_monotone_across_pruning(caplog):
    dataset = rank_one_dataset()
    hyper = rank_one_hyperparameters(max_iter=40, prune_threshold=1e-4)
    with caplog.at_level(logging.INFO, logger="gfamix"):
        model = fit(dataset, hyper, seed=0)
    assert model.state.K < 3
    assert "Pruning cluster-specific factor" in caplog.text
    assert "decreased" not in caplog.text
    trace = np.array(model.elbo_trace)
    assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[1:]))


def test_fit_recovers_benchmark_clusters():
    recovered = 0
    for seed in range(5):
        _, dataset, latents = mock_benchmark(N=60, M=4, D=5, seed=seed)
        model = fit(dataset, mock_hyperparameters(K=2, K_hat=4, S=2), seed=seed)
        if adjusted_rand_score(latents.c, hard_assignments(model)) >= 0.9:
            recovered += 1
    assert recovered >= 4


def pruning_state(**kwargs):
    dataset = mock_dataset(N=30)
    hyper = mock_hyperparameters(K=2, K_hat=1, S=2, prune_threshold=1e-3, **kwargs)
    state = mock_state(dataset, hyper, n_cycles=1)
    shape = np.ones_like(state.alpha_shape)
    shape[:, :, 0] = 1e6
    return replace(
        state,
        alpha_shape=shape,
        alpha_rate=np.ones_like(shape),
        alpha_hat_shape=np.ones_like(state.alpha_hat_shape),
        alpha_hat_rate=np.ones_like(state.alpha_hat_rate),
    )


def test_prune_factors_without_threshold():
    state = mock_state()
    assert prune_factors(state) is state


def test_prune_factors_nothing_to_prune():
    state = pruning_state()
    state = replace(state, alpha_shape=np.ones_like(state.alpha_shape))
    assert prune_factors(state) is state


def test_prune_factors_removes_irrelevant_specific_factor(caplog):
    state = pruning_state()
    with caplog.at_level(logging.INFO, logger="gfamix"):
        pruned = prune_factors(state)
    assert (pruned.K, pruned.K_hat) == (1, 1)
    assert (pruned.hyper.K, pruned.hyper.K_hat) == (1, 1)
    np.testing.assert_array_equal(pruned.z_mean, state.z_mean[:, [1, 2]])
    np.testing.assert_array_equal(pruned.z_cov[:, 0, 1], state.z_cov[:, 1, 2])
    for row, original in zip(pruned.w_mean, state.w_mean):
        for w, w0 in zip(row, original):
            np.testing.assert_array_equal(w, w0[:, [1]])
    assert pruned.w_cov.shape == (2, 2, 1, 1)
    assert pruned.alpha_shape.shape == (2, 2, 1)
    assert "Pruning cluster-specific factor 0" in caplog.text


def test_prune_factors_keeps_factor_used_by_one_cluster():
    state = pruning_state()
    shape = np.array(state.alpha_shape)
    shape[1, 0, 0] = 1.0
    state = replace(state, alpha_shape=shape)
    assert prune_factors(state) is state


def test_prune_factors_removes_shared_factor():
    state = pruning_state()
    state = replace(
        state,
        alpha_shape=np.ones_like(state.alpha_shape),
        alpha_hat_shape=np.full_like(state.alpha_hat_shape, 1e6),
    )
    pruned = prune_factors(state)
    assert (pruned.K, pruned.K_hat) == (2, 0)
    assert [w.shape for w in pruned.what_mean] == [(3, 0), (2, 0)]
    np.testing.assert_array_equal(pruned.z_mean, state.z_mean[:, :2])


def test_prune_factors_refuses_to_remove_everything(caplog):
    state = pruning_state()
    state = replace(
        state,
        alpha_shape=np.full_like(state.alpha_shape, 1e6),
        alpha_hat_shape=np.full_like(state.alpha_hat_shape, 1e6),
    )
    with caplog.at_level(logging.WARNING, logger="gfamix"):
        assert prune_factors(state) is state
    assert "keeping them all" in caplog.text


def test_fit_with_prune_threshold_keeps_factor_counts_consistent():
    _, dataset, _ = mock_mixture_dataset(N=40)
    hyper = mock_hyperparameters(K=2, K_hat=2, max_iter=25, prune_threshold=1e30)
    model = fit(dataset, hyper, seed=0)
    assert model.hyper.n_factors == model.state.n_factors
    assert model.n_iterations == len(model.elbo_trace)
