"""Tangent features, empirical NTK Gram matrices, and kernel helpers."""

from dataclasses import dataclass

import numpy as np

from ntsbo.network import param_gradient


@dataclass
class FeatureMatrix:
    """Per-input parameter gradients stacked as rows (n x p)."""

    values: np.ndarray
    spec: object = None
    theta0_seed: object = None

    @property
    def shape(self):
        return self.values.shape


@dataclass
class GramMatrix:
    """Symmetric PSD kernel matrix with a tag naming its origin."""

    values: np.ndarray
    tag: str = "empirical-ntk"

    def __post_init__(self):
        K = np.asarray(self.values, dtype=float)
        n = K.shape[0]
        if K.shape != (n, n):
            raise ValueError("Gram matrix must be square")
        if n and np.max(np.abs(K - K.T)) > 1e-12 * max(1.0, np.max(np.abs(K))):
            raise ValueError("Gram matrix is not symmetric")
        self.values = 0.5 * (K + K.T)

    @property
    def shape(self):
        return self.values.shape


def tangent_features(spec, theta0, inputs, theta0_seed=None):
    """Stack param_gradient(spec, theta0, x) for each input as rows."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    if X.size == 0:
        X = X.reshape(0, spec.input_dim)
    rows = np.empty((X.shape[0], spec.param_count))
    for i in range(X.shape[0]):
        rows[i] = param_gradient(spec, theta0, X[i])
    return FeatureMatrix(rows, spec=spec, theta0_seed=theta0_seed)


def empirical_ntk(features):
    """Gram matrix of pairwise tangent-feature inner products."""
    F = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
    return GramMatrix(F @ F.T, tag="empirical-ntk")


def empirical_ntk_from_inputs(spec, theta0, inputs, block=64):
    """Empirical NTK Gram without holding all n x p features at once.

    Features are produced block-at-a-time; only the n x n Gram is retained.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    n = X.shape[0]
    blocks = []
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        blocks.append(tangent_features(spec, theta0, X[lo:hi]).values)
    K = np.empty((n, n))
    row = 0
    for Fi in blocks:
        col = 0
        for Fj in blocks:
            K[row:row + Fi.shape[0], col:col + Fj.shape[0]] = Fi @ Fj.T
            col += Fj.shape[0]
        row += Fi.shape[0]
    return GramMatrix(K, tag="empirical-ntk")


def reference_kernel(spec_template, wide_width, inputs, seeds):
    """Seed-averaged empirical NTK of a widened copy of the architecture.

    Serves as the stand-in for the exact infinite-width kernel; widening
    and averaging over independent initializations shrinks the
    finite-width fluctuation of each Gram entry.
    """
    from ntsbo.network import NetworkSpec, init_params

    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed required")
    wide = NetworkSpec(spec_template.depth, int(wide_width), spec_template.input_dim,
                       spec_template.activation, spec_template.output_scale)
    acc = None
    for seed in seeds:
        theta0 = init_params(wide, seed)
        K = empirical_ntk_from_inputs(wide, theta0, inputs).values
        acc = K if acc is None else acc + K
    return GramMatrix(acc / len(seeds), tag="reference")


def se_kernel(x, x_prime, lengthscale):
    """Squared-exponential kernel exp(-||x - x'||^2 / (2 l^2))."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError("dimension mismatch")
    d2 = float(np.sum((x - x_prime) ** 2))
    return float(np.exp(-d2 / (2.0 * lengthscale ** 2)))


def se_gram(X, X_prime, lengthscale):
    """SE kernel matrix between two input sets."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X_prime = np.atleast_2d(np.asarray(X_prime, dtype=float))
    d2 = (np.sum(X ** 2, axis=1)[:, None] + np.sum(X_prime ** 2, axis=1)[None, :]
          - 2.0 * X @ X_prime.T)
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * lengthscale ** 2))


@dataclass
class RFFBasis:
    """Random Fourier basis approximating the SE kernel."""

    frequencies: np.ndarray      # (M, d)
    phases: np.ndarray           # (M,)
    lengthscale: float

    @property
    def num_features(self):
        return self.frequencies.shape[0]


def make_rff_basis(num_features, input_dim, lengthscale, seed):
    """Sample an RFF basis: Gaussian frequencies at scale 1/l, uniform phases."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((num_features, input_dim)) / lengthscale
    b = rng.uniform(0.0, 2.0 * np.pi, size=num_features)
    return RFFBasis(W, b, float(lengthscale))


def rff_features(x, basis):
    """sqrt(2/M) * cos(Wx + b); inner products approximate the SE kernel."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    M = basis.num_features
    phi = np.sqrt(2.0 / M) * np.cos(X @ basis.frequencies.T + basis.phases)
    return phi[0] if single else phi


def save_gram(path, gram):
    """Dump a Gram matrix to CSV: first line the tag, then one row per line.

    Entries are written with full repr precision so load_gram round-trips
    the matrix exactly.
    """
    with open(path, "w") as fh:
        fh.write(gram.tag + "\n")
        for row in gram.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_gram(path):
    """Read a Gram matrix written by save_gram."""
    with open(path) as fh:
        tag = fh.readline().strip()
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    return GramMatrix(np.array(rows), tag=tag)
