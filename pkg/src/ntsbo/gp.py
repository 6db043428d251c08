"""Gaussian-process posterior computation and uncertainty-sampling initialization."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, LinAlgError

DEFAULT_NOISE_VAR = 0.01


@dataclass
class PosteriorMoments:
    """Posterior mean vector and covariance matrix at a set of test inputs."""

    mean: np.ndarray
    covariance: np.ndarray
    noise_var: float
    beta: float = 1.0

    @property
    def variance(self):
        return np.diag(self.covariance)


class CholeskyFailure(RuntimeError):
    """Gram matrix stayed non-PD through the whole jitter escalation."""


def chol_with_jitter(K):
    """Lower-triangular Cholesky factor, escalating diagonal jitter on failure.

    Starts at 1e-10 * trace/n and multiplies by 10 up to 1e-4 * trace/n.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    base = max(np.trace(K) / n, 1e-300)
    jitter = 0.0
    while True:
        try:
            return cholesky(K + jitter * np.eye(n), lower=True)
        except LinAlgError:
            jitter = 1e-10 * base if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-4 * base:
                raise CholeskyFailure(
                    f"Cholesky failed after jitter escalation to {jitter:.1e}")


def gp_posterior(kernel, observed_inputs, observed_values, noise_var, beta, test_inputs):
    """Posterior moments at test_inputs given noisy observations.

    ``kernel(A, B)`` must return the prior cross-Gram between two input sets.
    Both the kernel entries and the noise variance are scaled by beta**2
    before solving, so the mean is beta-invariant and the covariance scales
    by beta**2.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    Xte = np.atleast_2d(np.asarray(test_inputs, dtype=float))
    b2 = float(beta) ** 2
    Kss = b2 * kernel(Xte, Xte)

    y = np.asarray(observed_values, dtype=float)
    if len(y) == 0:
        cov = 0.5 * (Kss + Kss.T)
        return PosteriorMoments(np.zeros(Xte.shape[0]), cov, noise_var, beta)
    Xtr = np.atleast_2d(np.asarray(observed_inputs, dtype=float))
    if Xtr.shape[0] != len(y):
        raise ValueError("observed inputs/values length mismatch")

    Ktr = b2 * kernel(Xtr, Xtr)
    Kts = b2 * kernel(Xtr, Xte)
    A = Ktr + b2 * noise_var * np.eye(len(y))
    Lf = chol_with_jitter(A)
    alpha = cho_solve((Lf, True), y)
    V = cho_solve((Lf, True), Kts)
    mean = Kts.T @ alpha
    cov = Kss - Kts.T @ V
    cov = 0.5 * (cov + cov.T)
    return PosteriorMoments(mean, cov, noise_var, beta)


def gp_posterior_dense(kernel, observed_inputs, observed_values, noise_var, beta, test_inputs):
    """Dense-inverse reference path for gp_posterior (oracle, O(n^3) via inv)."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    Xte = np.atleast_2d(np.asarray(test_inputs, dtype=float))
    b2 = float(beta) ** 2
    Kss = b2 * kernel(Xte, Xte)
    y = np.asarray(observed_values, dtype=float)
    if len(y) == 0:
        return PosteriorMoments(np.zeros(Xte.shape[0]), 0.5 * (Kss + Kss.T),
                                noise_var, beta)
    Xtr = np.atleast_2d(np.asarray(observed_inputs, dtype=float))
    Ktr = b2 * kernel(Xtr, Xtr)
    Kts = b2 * kernel(Xtr, Xte)
    Ainv = np.linalg.inv(Ktr + b2 * noise_var * np.eye(len(y)))
    mean = Kts.T @ (Ainv @ y)
    cov = Kss - Kts.T @ Ainv @ Kts
    return PosteriorMoments(mean, 0.5 * (cov + cov.T), noise_var, beta)


def sample_gp_prior(grid, gram, seed):
    """One zero-mean draw with the given Gram as covariance, via Cholesky."""
    K = gram.values if hasattr(gram, "values") else np.asarray(gram, dtype=float)
    n = np.atleast_2d(np.asarray(grid, dtype=float)).shape[0]
    if K.shape != (n, n):
        raise ValueError("Gram does not match grid size")
    L = chol_with_jitter(K)
    rng = np.random.default_rng(seed)
    return L @ rng.standard_normal(n)


def predictive_variance_scores(features, selected, noise_var):
    """sigma^2 * phi^T (Sigma + sigma^2 I)^-1 phi for every candidate row.

    ``selected`` is the (k, p) matrix of already-chosen feature rows and
    Sigma is the sum of their outer products.  Evaluated through the
    k-dimensional dual solve (Woodbury), never forming the p x p matrix.
    The sigma^2 prefactor makes this exactly the kernel-side posterior
    variance with zero observations; it does not change the argmax.
    """
    F = np.asarray(features, dtype=float)
    norms = np.sum(F * F, axis=1)
    S = np.asarray(selected, dtype=float)
    if S.size == 0:
        return norms
    G = S @ S.T + noise_var * np.eye(S.shape[0])
    Q = F @ S.T                                   # (n, k)
    sol = np.linalg.solve(G, Q.T)                 # (k, n)
    return norms - np.sum(Q.T * sol, axis=0)


def uncertainty_sampling(features, noise_var, budget):
    """Sequentially pick the predictive-variance argmax over candidate features.

    Returns the list of selected domain indices; ties break to the lowest
    index.
    """
    F = features.values if hasattr(features, "values") else np.asarray(features, dtype=float)
    n = F.shape[0]
    if n == 0:
        raise ValueError("empty candidate domain")
    if budget > n:
        raise ValueError("budget exceeds domain size")
    chosen = []
    for _ in range(budget):
        scores = predictive_variance_scores(F, F[chosen], noise_var)
        scores[chosen] = -np.inf      # each domain point queried at most once
        chosen.append(int(np.argmax(scores)))
    return chosen
