import logging
from dataclasses import replace

import numpy as np
from pytest import approx, raises
from scipy.stats import multivariate_normal

from gfamix.dataset import validate_dataset
from gfamix.errors import ValidationError
from gfamix.inference import fit, initialize
from gfamix.mocks import (
    mock_benchmark,
    mock_dataset,
    mock_hyperparameters,
    mock_model,
    mock_state,
)
from gfamix.predict import (
    cluster_erps,
    cluster_log_likelihoods,
    hard_assignments,
    predict,
    reconstruct,
    reconstruct_shared,
    trial_average,
)


def trained(K=1, K_hat=1, S=2, dims=(3, 2), n_cycles=3):
    dataset = mock_dataset(N=30, dims=dims)
    state = mock_state(dataset, mock_hyperparameters(K=K, K_hat=K_hat, S=S), n_cycles=n_cycles)
    return mock_model(state, dataset), dataset


def separated_model():
    dataset = mock_dataset(N=20, dims=(2,))
    state = mock_state(dataset, mock_hyperparameters(K=1, K_hat=0, S=2))
    state = replace(
        state,
        w_mean=[[np.array([[10.0], [0.0]])], [np.array([[0.0], [10.0]])]],
        tau_shape=np.ones((2, 1)),
        tau_rate=np.ones((2, 1)),
        pi_conc=np.array([1.0, 1.0]),
        gamma_a=np.array([1e6, 1.0]),
        gamma_b=np.array([1.0, 1e6]),
    )
    return mock_model(state, dataset)


def test_predict_rows_are_probabilities():
    model, dataset = trained()
    result = predict(model, dataset)
    assert result.responsibilities.shape == (30, 2)
    np.testing.assert_allclose(result.responsibilities.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((result.prob_class1 >= 0) & (result.prob_class1 <= 1))


def test_predict_single_cluster():
    model, dataset = trained(S=1)
    result = predict(model, dataset)
    np.testing.assert_array_equal(result.responsibilities, 1.0)
    np.testing.assert_allclose(result.prob_class1, model.state.gamma_mean[0])


def test_predict_far_inside_a_cluster():
    model = separated_model()
    test = validate_dataset([np.array([[30.0, 0.0], [0.0, -30.0]])])
    result = predict(model, test)
    assert result.prob_class1[0] > 0.99
    assert result.prob_class1[1] < 0.01


def test_predict_ignores_labels():
    model, dataset = trained()
    unlabelled = dataset.without_labels()
    flipped = validate_dataset(list(dataset.views), 1 - dataset.labels)
    expected = predict(model, dataset).prob_class1
    np.testing.assert_array_equal(predict(model, unlabelled).prob_class1, expected)
    np.testing.assert_array_equal(predict(model, flipped).prob_class1, expected)


def test_predict_duplicated_and_permuted_samples():
    model, dataset = trained()
    result = predict(model, dataset)
    order = np.array([3, 3, 0, 7, 1])
    subset = predict(model, dataset.subset(order))
    np.testing.assert_allclose(
        subset.prob_class1, result.prob_class1[order], rtol=1e-10, atol=1e-12
    )
    np.testing.assert_allclose(
        subset.responsibilities[0], subset.responsibilities[1], rtol=1e-10, atol=1e-12
    )


def test_predict_dimension_mismatch():
    model, _ = trained()
    with raises(ValidationError) as err:
        predict(model, mock_dataset(dims=(3, 3)))
    assert "dimension mismatch" in str(err.value)


def test_cluster_log_likelihoods_match_dense_gaussian():
    model, dataset = trained()
    state = model.state
    data = dataset.concatenated()
    log_lik = cluster_log_likelihoods(model, dataset)
    for c in range(state.n_clusters):
        loadings = np.vstack([state.loading_mean(c, m) for m in range(dataset.n_views)])
        noise = np.concatenate(
            [np.full(d, 1 / state.tau_mean[c, m]) for m, d in enumerate(dataset.view_dims)]
        )
        covariance = loadings @ loadings.T + np.diag(noise)
        expected = multivariate_normal(np.zeros(data.shape[1]), covariance).logpdf(data)
        np.testing.assert_allclose(log_lik[:, c], expected, rtol=1e-8)


def scalar_model(z, w, z_hat=None, w_hat=None):
    K_hat = 0 if z_hat is None else 1
    dataset = validate_dataset([np.arange(len(z), dtype=float)[:, None]], np.arange(len(z)) % 2)
    state = initialize(dataset, mock_hyperparameters(K=1, K_hat=K_hat, S=1), seed=0)
    columns = [z] if z_hat is None else [z, z_hat]
    state = replace(
        state,
        z_mean=np.column_stack(columns).astype(float),
        w_mean=[[np.array([[w]], dtype=float)]],
        what_mean=[np.array([[w_hat]], dtype=float)] if K_hat else state.what_mean,
    )
    return mock_model(state, dataset)


def test_reconstruct_scalar_product():
    model = scalar_model([1, 2, 3], 2)
    (recon,) = reconstruct(model, 0)
    np.testing.assert_array_equal(recon, [[2.0], [4.0], [6.0]])


def test_reconstruct_zero_latents():
    model = scalar_model([0, 0, 0], 5, [0, 0, 0], 3)
    (recon,) = reconstruct(model, 0, include_shared=True)
    np.testing.assert_array_equal(recon, np.zeros((3, 1)))


def test_reconstruct_with_shared_block():
    model = scalar_model([1, 2, 3], 2, [1, 0, -1], 10)
    (specific,) = reconstruct(model, 0)
    (shared,) = reconstruct_shared(model)
    (combined,) = reconstruct(model, 0, include_shared=True)
    np.testing.assert_array_equal(specific, [[2.0], [4.0], [6.0]])
    np.testing.assert_array_equal(shared, [[10.0], [0.0], [-10.0]])
    np.testing.assert_array_equal(combined, [[12.0], [4.0], [-4.0]])


def test_reconstruct_shapes():
    model, dataset = trained(K=2, K_hat=1, S=3)
    for c in range(3):
        assert [r.shape for r in reconstruct(model, c)] == [(30, 3), (30, 2)]


def test_reconstruct_cluster_out_of_range():
    model, _ = trained()
    with raises(ValidationError):
        reconstruct(model, 2)
    with raises(ValidationError):
        reconstruct(model, -1)


def test_trial_average():
    recon = [np.array([[2.0, 1.0], [7.0, 7.0], [4.0, 3.0]]), np.array([[1.0], [2.0], [3.0]])]
    averaged = trial_average(recon, [True, False, True])
    np.testing.assert_array_equal(averaged[0], [3.0, 2.0])
    np.testing.assert_array_equal(averaged[1], [2.0])
    single = trial_average(recon, [False, True, False])
    np.testing.assert_array_equal(single[0], [7.0, 7.0])


def test_trial_average_ignores_unselected_rows():
    recon = [np.array([[2.0], [7.0], [4.0], [-1.0]])]
    mask = [True, False, True, False]
    shuffled = [recon[0][[0, 3, 2, 1]]]
    assert trial_average(recon, mask)[0][0] == trial_average(shuffled, mask)[0][0]


def test_trial_average_empty_mask():
    with raises(ValidationError):
        trial_average([np.ones((3, 2))], [False, False, False])


def test_cluster_erps_panels():
    model, dataset = trained()
    panels = cluster_erps(model)
    assert set(panels) == {"cluster1", "cluster2", "shared", "diff"}
    assert [p.shape for p in panels["cluster1"]] == [(3,), (2,)]
    for diff, a, b in zip(panels["diff"], panels["cluster1"], panels["cluster2"]):
        np.testing.assert_array_equal(diff, a - b)
    with_data = cluster_erps(model, dataset)
    assert {"data_cluster1", "data_cluster2"} <= set(with_data)


def test_cluster_erps_pairwise_names():
    model, _ = trained(S=3)
    panels = cluster_erps(model)
    assert {"diff_1_2", "diff_1_3", "diff_2_3"} <= set(panels)
    assert "diff" not in panels


def test_cluster_erps_empty_cluster_uses_all_trials(caplog):
    model, _ = trained()
    resp = np.zeros_like(model.state.resp)
    resp[:, 0] = 1.0
    model = replace(model, state=replace(model.state, resp=resp))
    with caplog.at_level(logging.INFO, logger="gfamix"):
        panels = cluster_erps(model)
    expected = trial_average(reconstruct(model, 1), np.ones(30, dtype=bool))
    for panel, value in zip(panels["cluster2"], expected):
        np.testing.assert_array_equal(panel, value)
    assert "owns no trial" in caplog.text


def test_cluster_erps_sample_count_mismatch():
    model, _ = trained()
    with raises(ValidationError):
        cluster_erps(model, mock_dataset(N=12))


def test_prob_class1_mixes_label_probabilities():
    model = separated_model()
    test = validate_dataset([np.zeros((1, 2))])
    result = predict(model, test)
    assert result.responsibilities[0] == approx([0.5, 0.5])
    assert result.prob_class1[0] == approx(0.5, abs=1e-5)


def test_reconstruction_follows_the_noiseless_signal():
    for seed in range(2):
        params, dataset, latents = mock_benchmark(N=60, M=4, D=5, seed=seed)
        model = fit(dataset, mock_hyperparameters(K=2, K_hat=4, S=2), seed=seed)
        assignments = hard_assignments(model)
        recon = [reconstruct(model, c, include_shared=True) for c in range(model.n_clusters)]
        for m in range(dataset.n_views):
            signal = np.stack(
                [
                    params.W[c][m] @ latents.z[n] + params.W_hat[m] @ latents.z_hat[n]
                    for n, c in enumerate(latents.c)
                ]
            )
            fitted = np.stack([recon[c][m][n] for n, c in enumerate(assignments)])
            assert np.corrcoef(signal.ravel(), fitted.ravel())[0, 1] >= 0.8
