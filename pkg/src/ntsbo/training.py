"""Sample-then-optimize training of per-slot acquisition functions.

Each acquisition draw randomly initializes a surrogate, trains it on the
observation history with the ridge-regularized squared loss

    L(theta) = sum_i (y_i - f(x_i; theta))^2 + beta^2 sigma^2 ||theta - theta0||^2

and returns the trained function as a deterministic evaluator.  Before
training, the targets of a draw are perturbed with fresh N(0, beta^2 sigma^2)
noise; this is what makes the across-draw distribution of trained linear
evaluators match the GP posterior (mean AND variance) rather than an
under-dispersed version of it.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ntsbo.network import (
    init_params,
    zero_last_layer,
    forward_batch,
    vjp_batch,
    jvp_batch,
)
from ntsbo.kernels import tangent_features

_TARGET_NOISE_STREAM = 0x5A11


@dataclass
class TrainConfig:
    step_size: float = 1.0
    max_steps: int = 100_000
    grad_tol: float = None          # default 1e-6 * (1 + ||y||)
    noise_var: float = 0.01
    beta: float = 1.0

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")

    @property
    def ridge(self):
        return self.beta ** 2 * self.noise_var


@dataclass
class AcquisitionSample:
    """A trained per-slot acquisition function."""

    kind: str                                  # bnts | bnts-linear | deep-ensemble
    evaluator: Callable                        # (n, d) array -> (n,) values
    provenance: dict = field(default_factory=dict)

    def __call__(self, X):
        return self.evaluator(X)


class TangentLinearModel:
    """Linear evaluator family over tangent features frozen at theta0_prime."""

    def __init__(self, spec, theta0_prime):
        self.spec = spec
        self.theta0_prime = np.asarray(theta0_prime, dtype=float)
        self._cache = {}

    def features(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        key = X.tobytes()
        if key not in self._cache:
            self._cache[key] = tangent_features(self.spec, self.theta0_prime, X).values
        return self._cache[key]

    def predict(self, theta, X):
        return self.features(X) @ theta

    def grad_weighted(self, theta, X, weights):
        return self.features(X).T @ weights


class CorrectedNetworkModel:
    """Network evaluator plus the frozen tangent-feature correction term.

    predict(theta, x) = f(x; theta) + <grad f(x; theta0), theta0_prime>,
    with the correction evaluated at the frozen theta0 regardless of the
    current theta (it is a constant offset during training).
    """

    def __init__(self, spec, theta0, theta0_prime):
        self.spec = spec
        self.theta0 = np.asarray(theta0, dtype=float)
        self.theta0_prime = np.asarray(theta0_prime, dtype=float)
        self._offset_cache = {}

    def offset(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not np.any(self.theta0_prime):
            return np.zeros(X.shape[0])
        key = X.tobytes()
        if key not in self._offset_cache:
            self._offset_cache[key] = jvp_batch(self.spec, self.theta0, X, self.theta0_prime)
        return self._offset_cache[key]

    def predict(self, theta, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return forward_batch(self.spec, theta, X) + self.offset(X)

    def grad_weighted(self, theta, X, weights):
        return vjp_batch(self.spec, theta, X, weights)


def sto_loss(theta, inputs, targets, theta0, model, beta, noise_var):
    """Squared-error data fit plus the beta^2 sigma^2 pull toward theta0."""
    theta = np.asarray(theta, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if theta.shape != theta0.shape:
        raise ValueError("theta/theta0 length mismatch")
    y = np.asarray(targets, dtype=float)
    diff = theta - theta0
    reg = beta ** 2 * noise_var * float(diff @ diff)
    if len(y) == 0:
        return reg
    resid = y - model.predict(theta, inputs)
    return float(resid @ resid) + reg


class DivergenceError(RuntimeError):
    """Loss blew up during gradient descent; step size too large."""


@dataclass
class TrainResult:
    theta: np.ndarray
    grad_norm: float
    steps: int
    loss: float


def train_gd(model, inputs, targets, theta0, cfg):
    """Full-batch gradient descent with backtracking (Armijo) line search.

    Stops when the loss-gradient norm falls below grad_tol or after
    max_steps accepted steps.
    """
    theta0 = np.asarray(theta0, dtype=float)
    y = np.asarray(targets, dtype=float)
    lam = cfg.ridge
    tol = cfg.grad_tol if cfg.grad_tol is not None else 1e-6 * (1.0 + np.linalg.norm(y))

    def loss_of(th):
        return sto_loss(th, inputs, y, theta0, model, cfg.beta, cfg.noise_var)

    def grad_of(th):
        g = 2.0 * lam * (th - theta0)
        if len(y):
            resid = model.predict(th, inputs) - y
            g = g + 2.0 * model.grad_weighted(th, inputs, resid)
        return g

    theta = theta0.copy()
    loss = loss_of(theta)
    init_loss = max(loss, 1e-300)
    step = cfg.step_size
    steps = 0
    g = grad_of(theta)
    grad_norm = np.linalg.norm(g)
    while steps < cfg.max_steps and grad_norm > tol:
        g2 = grad_norm ** 2
        s = step
        while True:
            cand = theta - s * g
            cand_loss = loss_of(cand)
            if cand_loss <= loss - 1e-4 * s * g2:
                break
            s *= 0.5
            if s < 1e-20:
                cand = None                       # no descent possible
                break
        if cand is None:
            break
        theta, loss = cand, cand_loss
        step = 2.0 * s
        steps += 1
        if loss > 1e6 * init_loss:
            raise DivergenceError("loss exceeded 1e6x its initial value")
        g = grad_of(theta)
        grad_norm = np.linalg.norm(g)
    return TrainResult(theta, float(grad_norm), steps, float(loss))


def ridge_closed_form(features, targets, theta0, ridge):
    """Exact minimizer of the loss over linear evaluators, via the n x n dual solve."""
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    Phi = np.atleast_2d(np.asarray(features, dtype=float))
    theta0 = np.asarray(theta0, dtype=float)
    y = np.asarray(targets, dtype=float)
    if len(y) == 0:
        return theta0.copy()
    resid = y - Phi @ theta0
    G = Phi @ Phi.T + ridge * np.eye(len(y))
    alpha = cho_solve(cho_factor(G, lower=True), resid)
    return theta0 + Phi.T @ alpha


def _perturbed_targets(targets, cfg, seed):
    y = np.asarray(targets, dtype=float)
    if len(y) == 0:
        return y
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1),
                                                        _TARGET_NOISE_STREAM]))
    return y + cfg.beta * np.sqrt(cfg.noise_var) * rng.standard_normal(len(y))


def _as_arrays(history):
    """Accept (X, y) pairs or History-like objects with inputs()/values()."""
    if hasattr(history, "training_arrays"):
        return history.training_arrays()
    X, y = history
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float)) if len(y) else np.empty((0, 0))
    return X, y


def draw_acquisition_bnts(history, spec, cfg, seed_theta0, seed_theta0prime,
                          zero_prime=False, perturb_targets=True):
    """One sample-then-optimize acquisition draw with the network family.

    theta0 and theta0_prime are drawn independently; theta0_prime has its
    output layer zeroed so the correction term carries only the hidden-layer
    tangent directions.  ``zero_prime`` drops the correction entirely
    (the deep-ensemble ablation).
    """
    spec = spec.with_output_scale(cfg.beta)
    X, y = _as_arrays(history)
    theta0 = init_params(spec, seed_theta0)
    if zero_prime:
        theta0p = np.zeros(spec.param_count)
    else:
        theta0p = zero_last_layer(init_params(spec, seed_theta0prime), spec)
    model = CorrectedNetworkModel(spec, theta0, theta0p)
    y_train = _perturbed_targets(y, cfg, seed_theta0) if perturb_targets else y
    result = train_gd(model, X, y_train, theta0, cfg)

    def evaluator(Xq):
        return model.predict(result.theta, Xq)

    kind = "deep-ensemble" if zero_prime else "bnts"
    return AcquisitionSample(kind, evaluator, provenance={
        "seed_theta0": seed_theta0,
        "seed_theta0prime": None if zero_prime else seed_theta0prime,
        "grad_norm": result.grad_norm,
        "steps": result.steps,
        "loss": result.loss,
    })


def draw_acquisition_linear(history, spec, cfg, seed_theta0prime, seed_theta0,
                            trainer="closed-form", perturb_targets=True):
    """Acquisition draw with the linear family over frozen tangent features.

    The closed-form dual ridge solve is the default trainer; gradient
    descent is kept as a cross-check mode.
    """
    spec = spec.with_output_scale(cfg.beta)
    X, y = _as_arrays(history)
    theta0p = init_params(spec, seed_theta0prime)
    theta0 = init_params(spec, seed_theta0)
    model = TangentLinearModel(spec, theta0p)
    y_train = _perturbed_targets(y, cfg, seed_theta0) if perturb_targets else y
    if trainer == "closed-form":
        if len(y_train):
            theta_star = ridge_closed_form(model.features(X), y_train, theta0, cfg.ridge)
        else:
            theta_star = theta0.copy()
        info = {"trainer": "closed-form"}
    elif trainer == "gd":
        result = train_gd(model, X, y_train, theta0, cfg)
        theta_star = result.theta
        info = {"trainer": "gd", "grad_norm": result.grad_norm, "steps": result.steps}
    else:
        raise ValueError(f"unknown trainer {trainer!r}")

    def evaluator(Xq):
        return model.predict(theta_star, Xq)

    return AcquisitionSample("bnts-linear", evaluator, provenance={
        "seed_theta0": seed_theta0,
        "seed_theta0prime": seed_theta0prime,
        **info,
    })


def draw_acquisition_deep_ensemble(history, spec, cfg, seed_theta0, perturb_targets=True):
    """BNTS draw with the tangent correction removed (theta0_prime = 0)."""
    sample = draw_acquisition_bnts(history, spec, cfg, seed_theta0,
                                   seed_theta0prime=0, zero_prime=True,
                                   perturb_targets=perturb_targets)
    return sample
