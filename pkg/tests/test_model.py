import numpy as np
from pytest import raises

from gfamix.config import RUN_DEFAULTS
from gfamix.errors import ValidationError
from gfamix.model import (
    GenerativeParams,
    Hyperparameters,
    default_hyperparameters,
    make_weak_signal_benchmark,
    sample_generative,
)


def one_cluster_params(K=1, K_hat=1, dim=2, tau=1.0):
    return GenerativeParams(
        W=[[np.ones((dim, K))]],
        W_hat=[np.ones((dim, K_hat))],
        tau=np.array([[tau]]),
        pi=np.array([1.0]),
        gamma=np.array([0.3]),
    )


def test_default_hyperparameters():
    hyper = default_hyperparameters(2, 4, 2)
    assert hyper.shared_ard_shape == 30.0
    assert hyper.shared_ard_rate == 1.0
    assert hyper.beta_weight == 100.0
    assert hyper.ard_shape == 1e-14
    assert hyper.prune_threshold is None
    assert hyper.n_factors == 6


def test_hyperparameters_reject_invalid_values():
    with raises(ValidationError):
        Hyperparameters(K=0, K_hat=0, S=1)
    with raises(ValidationError):
        Hyperparameters(K=1, K_hat=1, S=0)
    with raises(ValidationError):
        default_hyperparameters(1, 1, 1, beta_weight=0.0)
    with raises(ValidationError):
        default_hyperparameters(1, 1, 1, noise_rate=float("nan"))


def test_hyperparameters_allow_no_shared_factors():
    assert default_hyperparameters(6, 0, 2).n_factors == 6


def test_with_counts():
    hyper = default_hyperparameters(2, 4, 2, beta_weight=10.0)
    reduced = hyper.with_counts(K_hat=1)
    assert (reduced.K, reduced.K_hat, reduced.S) == (2, 1, 2)
    assert reduced.beta_weight == 10.0


def test_generative_params_validation():
    with raises(ValidationError):
        GenerativeParams(
            W=[[np.ones((2, 1))]],
            W_hat=[np.ones((2, 1))],
            tau=np.array([[0.0]]),
            pi=np.array([1.0]),
            gamma=np.array([0.5]),
        )
    with raises(ValidationError):
        GenerativeParams(
            W=[[np.ones((2, 1))]],
            W_hat=[np.ones((2, 1))],
            tau=np.array([[1.0]]),
            pi=np.array([0.7]),
            gamma=np.array([0.5]),
        )
    with raises(ValidationError):
        GenerativeParams(
            W=[[np.ones((3, 1))]],
            W_hat=[np.ones((2, 1))],
            tau=np.array([[1.0]]),
            pi=np.array([1.0]),
            gamma=np.array([0.5]),
        )


def test_sample_generative_shape_mismatch():
    with raises(ValidationError) as excinfo:
        sample_generative(one_cluster_params(K=2), default_hyperparameters(1, 1, 1), 10, 0)
    assert "shape mismatch" in str(excinfo.value)


def test_sample_generative_single_cluster():
    dataset, latents = sample_generative(
        one_cluster_params(), default_hyperparameters(1, 1, 1), 50, 3
    )
    assert dataset.n_samples == 50
    assert dataset.view_dims == (2,)
    assert np.all(latents.c == 0)
    assert latents.z.shape == (50, 1)
    assert latents.z_hat.shape == (50, 1)


def test_sample_generative_empirical_covariance():
    """
    Stacking views gives x ~ Normal(0, W W^T + W_hat W_hat^T + I/tau); with
    N=50000 the sample covariance is within a few percent of it.
    """
    params = one_cluster_params(tau=4.0)
    dataset, _ = sample_generative(params, default_hyperparameters(1, 1, 1), 50000, 11)
    expected = 2 * np.ones((2, 2)) + np.eye(2) / 4.0
    covariance = np.cov(dataset.views[0], rowvar=False)
    np.testing.assert_allclose(covariance, expected, atol=0.08)


def test_sample_generative_labels_follow_clusters():
    params = GenerativeParams(
        W=[[np.ones((2, 1))], [-np.ones((2, 1))]],
        W_hat=[np.zeros((2, 1))],
        tau=np.ones((2, 1)),
        pi=np.array([0.5, 0.5]),
        gamma=np.array([1.0, 0.0]),
    )
    _, latents = sample_generative(params, default_hyperparameters(1, 1, 2), 200, 0)
    np.testing.assert_array_equal(latents.r, (latents.c == 0).astype(int))


def test_sample_generative_is_deterministic():
    params = one_cluster_params()
    hyper = default_hyperparameters(1, 1, 1)
    first, _ = sample_generative(params, hyper, 20, 5)
    second, _ = sample_generative(params, hyper, 20, 5)
    np.testing.assert_array_equal(first.views[0], second.views[0])


def test_benchmark_signal_ratio():
    params, dataset, latents = make_weak_signal_benchmark(60, 4, 5, seed=1)
    assert dataset.n_samples == 60
    assert dataset.view_dims == (5, 5, 5, 5)
    assert params.K == 2
    assert params.K_hat == 4
    shared = np.sqrt(sum(np.sum(w**2) for w in params.W_hat))
    for loadings in params.W:
        specific = np.sqrt(sum(np.sum(w**2) for w in loadings))
        assert abs(shared / specific - 5.0) < 1e-12
    np.testing.assert_array_equal(latents.r, (latents.c == 0).astype(int))


def test_benchmark_is_deterministic():
    _, first, _ = make_weak_signal_benchmark(20, 2, 3, seed=7)
    _, second, _ = make_weak_signal_benchmark(20, 2, 3, seed=7)
    for a, b in zip(first.views, second.views):
        np.testing.assert_array_equal(a, b)


def test_benchmark_preconditions():
    with raises(ValidationError):
        make_weak_signal_benchmark(3, 4, 5, seed=0)
    with raises(ValidationError):
        make_weak_signal_benchmark(9, 4, 5, seed=0)
    with raises(ValidationError):
        make_weak_signal_benchmark(20, 1, 5, seed=0)
    with raises(ValidationError):
        make_weak_signal_benchmark(20, 2, 1, seed=0)


def test_benchmark_noise_precision():
    params, _, _ = make_weak_signal_benchmark(20, 2, 3, seed=0)
    assert params.tau.shape == (2, 2)
    assert np.all(params.tau == RUN_DEFAULTS["noise_precision"])
    params, _, _ = make_weak_signal_benchmark(20, 2, 3, seed=0, noise_precision=4.0)
    assert np.all(params.tau == 4.0)
    with raises(ValidationError):
        make_weak_signal_benchmark(20, 2, 3, seed=0, noise_precision=0.0)
