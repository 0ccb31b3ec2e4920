"""
The generative model: hyperparameters, ground-truth parameters, exact
sampling, and the weak-signal benchmark used to reproduce the effect of
shared factors.

Each sample n belongs to a cluster c_n drawn from pi. Its views are generated
from cluster-specific factors and shared factors,

    x_n^(m) ~ Normal(W_{c_n}^(m) z_n + W_hat^(m) z_hat_n, 1 / tau_{c_n}^(m) I)

and its label is r_n ~ Bernoulli(gamma_{c_n}). Both latents are standard
normal. Cluster indices are 0-based throughout the Python API.
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import List, Optional

import numpy as np

from gfamix.config import (
    HYPERPARAMETER_DEFAULTS,
    RUN_DEFAULTS,
    count_errors,
    hyperparameter_errors,
)
from gfamix.dataset import validate_dataset
from gfamix.errors import ValidationError

logger = logging.getLogger(__name__)

BENCHMARK_SPECIFIC_FACTORS = 2
BENCHMARK_SHARED_FACTORS = 4


@dataclass(frozen=True)
class Hyperparameters:
    K: int
    K_hat: int
    S: int
    ard_shape: float = HYPERPARAMETER_DEFAULTS["ard_shape"]
    ard_rate: float = HYPERPARAMETER_DEFAULTS["ard_rate"]
    shared_ard_shape: float = HYPERPARAMETER_DEFAULTS["shared_ard_shape"]
    shared_ard_rate: float = HYPERPARAMETER_DEFAULTS["shared_ard_rate"]
    noise_shape: float = HYPERPARAMETER_DEFAULTS["noise_shape"]
    noise_rate: float = HYPERPARAMETER_DEFAULTS["noise_rate"]
    beta_weight: float = HYPERPARAMETER_DEFAULTS["beta_weight"]
    dirichlet_conc: float = HYPERPARAMETER_DEFAULTS["dirichlet_conc"]
    beta_a: float = HYPERPARAMETER_DEFAULTS["beta_a"]
    beta_b: float = HYPERPARAMETER_DEFAULTS["beta_b"]
    max_iter: int = HYPERPARAMETER_DEFAULTS["max_iter"]
    elbo_rel_tol: float = HYPERPARAMETER_DEFAULTS["elbo_rel_tol"]
    prune_threshold: Optional[float] = HYPERPARAMETER_DEFAULTS["prune_threshold"]

    def __post_init__(self):
        errors = count_errors(self.K, self.K_hat, self.S)
        errors += hyperparameter_errors(
            {key: getattr(self, key) for key in HYPERPARAMETER_DEFAULTS}
        )
        if errors:
            raise ValidationError("Invalid hyperparameters: " + "; ".join(errors))

    @property
    def n_factors(self):
        return self.K + self.K_hat

    def with_counts(self, K=None, K_hat=None, S=None):
        return replace(
            self,
            K=self.K if K is None else K,
            K_hat=self.K_hat if K_hat is None else K_hat,
            S=self.S if S is None else S,
        )

    def to_dict(self):
        return asdict(self)


def default_hyperparameters(K, K_hat, S, **overrides):
    values = {**HYPERPARAMETER_DEFAULTS, **overrides}
    return Hyperparameters(K=K, K_hat=K_hat, S=S, **values)


@dataclass(frozen=True)
class GenerativeParams:
    """
    Ground-truth parameters. `W[c][m]` is D_m x K, `W_hat[m]` is D_m x K_hat,
    `tau` is S x M, `pi` and `gamma` have length S.
    """

    W: List[List[np.ndarray]]
    W_hat: List[np.ndarray]
    tau: np.ndarray
    pi: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 1 or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValidationError("pi must be a probability vector")
        tau = np.asarray(self.tau, dtype=float)
        if tau.shape != (len(pi), len(self.W_hat)):
            raise ValidationError(
                f"tau has shape {tau.shape}, expected {(len(pi), len(self.W_hat))}"
            )
        if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
            raise ValidationError("Every noise precision tau must be positive")
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.shape != pi.shape or np.any(gamma < 0) or np.any(gamma > 1):
            raise ValidationError("gamma must hold one probability per cluster")
        if len(self.W) != len(pi):
            raise ValidationError(f"W has {len(self.W)} clusters, pi has {len(pi)}")
        K = self.K
        for c, loadings in enumerate(self.W):
            if len(loadings) != len(self.W_hat):
                raise ValidationError(
                    f"W[{c}] has {len(loadings)} views, expected {len(self.W_hat)}"
                )
            for m, (w, w_hat) in enumerate(zip(loadings, self.W_hat)):
                if w.ndim != 2 or w.shape != (w_hat.shape[0], K):
                    raise ValidationError(
                        f"W[{c}][{m}] has shape {w.shape}, expected {(w_hat.shape[0], K)}"
                    )
        for m, w_hat in enumerate(self.W_hat):
            if w_hat.ndim != 2 or w_hat.shape[1] != self.K_hat:
                raise ValidationError(f"W_hat[{m}] has inconsistent shape {w_hat.shape}")

    @property
    def n_clusters(self):
        return len(self.pi)

    @property
    def n_views(self):
        return len(self.W_hat)

    @property
    def view_dims(self):
        return tuple(w.shape[0] for w in self.W_hat)

    @property
    def K(self):
        return self.W[0][0].shape[1]

    @property
    def K_hat(self):
        return self.W_hat[0].shape[1]

    def check_against(self, hyper: Hyperparameters):
        expected = (hyper.S, hyper.K, hyper.K_hat)
        found = (self.n_clusters, self.K, self.K_hat)
        if expected != found:
            raise ValidationError(
                f"shape mismatch: the parameters have (S, K, K_hat)={found},"
                f" the hyperparameters {expected}"
            )


@dataclass(frozen=True)
class LatentRecord:
    z: np.ndarray
    z_hat: np.ndarray
    c: np.ndarray
    r: np.ndarray


def sample_generative(params: GenerativeParams, hyper: Hyperparameters, N, seed):
    params.check_against(hyper)
    if N < 1:
        raise ValidationError(f"N must be at least 1, got {N}")
    rng = np.random.default_rng(seed)
    clusters = rng.choice(params.n_clusters, size=N, p=np.asarray(params.pi, dtype=float))
    z = rng.standard_normal((N, params.K))
    z_hat = rng.standard_normal((N, params.K_hat))

    views = []
    for m, dim in enumerate(params.view_dims):
        signal = z_hat @ params.W_hat[m].T
        for c in range(params.n_clusters):
            members = clusters == c
            signal[members] += z[members] @ params.W[c][m].T
        noise_sd = 1.0 / np.sqrt(np.asarray(params.tau)[clusters, m])
        views.append(signal + rng.standard_normal((N, dim)) * noise_sd[:, None])

    labels = (rng.random(N) < np.asarray(params.gamma)[clusters]).astype(int)
    dataset = validate_dataset(views, labels)
    return dataset, LatentRecord(z=z, z_hat=z_hat, c=clusters, r=labels)


def make_weak_signal_benchmark(
    N,
    M,
    D,
    seed,
    signal_ratio=RUN_DEFAULTS["signal_ratio"],
    noise_precision=RUN_DEFAULTS["noise_precision"],
    K=BENCHMARK_SPECIFIC_FACTORS,
    K_hat=BENCHMARK_SHARED_FACTORS,
):
    """
    Two clusters whose cluster-specific loadings are `signal_ratio` times
    weaker (in Frobenius norm, over all views) than the shared loadings.
    Cluster 0 always carries label 1 and cluster 1 label 0. The default noise
    precision keeps the noise variance well below the per-direction variance
    of the weak cluster-specific loadings.
    """
    if N < 8 or N % 2:
        raise ValidationError(f"N must be even and at least 8, got {N}")
    if M < 2:
        raise ValidationError(f"M must be at least 2, got {M}")
    if D < 2:
        raise ValidationError(f"D must be at least 2, got {D}")
    if not signal_ratio > 0:
        raise ValidationError(f"signal_ratio must be positive, got {signal_ratio}")
    if not noise_precision > 0:
        raise ValidationError(f"noise_precision must be positive, got {noise_precision}")

    param_seed, sample_seed = np.random.SeedSequence(seed).generate_state(2)
    rng = np.random.default_rng(param_seed)
    W_hat = [rng.standard_normal((D, K_hat)) for _ in range(M)]
    shared_norm = np.sqrt(sum(np.sum(w**2) for w in W_hat))
    W = []
    for _ in range(2):
        loadings = [rng.standard_normal((D, K)) for _ in range(M)]
        norm = np.sqrt(sum(np.sum(w**2) for w in loadings))
        scale = shared_norm / (signal_ratio * norm) if norm > 0 else 0.0
        W.append([w * scale for w in loadings])

    params = GenerativeParams(
        W=W,
        W_hat=W_hat,
        tau=np.full((2, M), float(noise_precision)),
        pi=np.array([0.5, 0.5]),
        gamma=np.array([1.0, 0.0]),
    )
    hyper = default_hyperparameters(K, K_hat, 2)
    dataset, latents = sample_generative(params, hyper, N, int(sample_seed))
    logger.debug(
        "Simulated %d samples, %d views of dimension %d (seed %d)", N, M, D, seed
    )
    return params, dataset, latents
