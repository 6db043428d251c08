"""Fully-connected scalar-output surrogate network.

The network has L hidden layers of equal width m, no bias terms, and a
linear output unit.  Every weight is drawn from the standard Gaussian and
each pre-activation is rescaled by sqrt(c / fan_in), with c = 2 for ReLU
and c = 1 for ERF and for the linear output.  This keeps the output at
O(1) scale under standard-Gaussian initialization.

Parameter layout (flat vector of length p = d*m + (L-1)*m^2 + m):
    [W1 row-major (m x d)] [W2 row-major (m x m)] ... [WL] [w_out (m)]
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

_ACTIVATIONS = ("relu", "erf")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of the surrogate network."""

    depth: int
    width: int
    input_dim: int
    activation: str = "relu"
    output_scale: float = 1.0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.input_dim < 1:
            raise ValueError("depth, width and input_dim must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.output_scale > 0:
            raise ValueError("output_scale must be positive")

    @property
    def param_count(self):
        L, m, d = self.depth, self.width, self.input_dim
        return d * m + (L - 1) * m * m + m

    def with_output_scale(self, scale):
        return NetworkSpec(self.depth, self.width, self.input_dim,
                           self.activation, float(scale))


def _act(spec, z):
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    return erf(z)


def _act_deriv(spec, z):
    if spec.activation == "relu":
        # subgradient 0 at exactly 0
        return (z > 0).astype(z.dtype)
    return (2.0 / np.sqrt(np.pi)) * np.exp(-z * z)


def _act_gain(spec):
    return 2.0 if spec.activation == "relu" else 1.0


def _layer_scales(spec):
    """Pre-activation scale factors: hidden layers 1..L, then output."""
    c = _act_gain(spec)
    scales = [np.sqrt(c / spec.input_dim)]
    scales += [np.sqrt(c / spec.width)] * (spec.depth - 1)
    scales.append(np.sqrt(1.0 / spec.width))
    return scales


def unpack_params(spec, theta):
    """Split a flat parameter vector into (hidden weight matrices, output weights)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.param_count,):
        raise ValueError(f"expected {spec.param_count} parameters, got {theta.shape}")
    L, m, d = spec.depth, spec.width, spec.input_dim
    mats = []
    off = 0
    mats.append(theta[off:off + m * d].reshape(m, d))
    off += m * d
    for _ in range(L - 1):
        mats.append(theta[off:off + m * m].reshape(m, m))
        off += m * m
    w_out = theta[off:off + m]
    return mats, w_out


def pack_params(spec, mats, w_out):
    parts = [w.ravel() for w in mats] + [np.ravel(w_out)]
    theta = np.concatenate(parts)
    assert theta.shape == (spec.param_count,)
    return theta


def init_params(spec, seed):
    """Draw all parameters i.i.d. from the standard Gaussian; deterministic per seed."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal(spec.param_count)


def zero_last_layer(theta, spec):
    """Return a copy with the output-layer weights set to zero."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.param_count,):
        raise ValueError("parameter vector does not match spec")
    out = theta.copy()
    out[-spec.width:] = 0.0
    return out


def _check_inputs(spec, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.input_dim:
        raise ValueError(f"inputs have dimension {X.shape[1]}, expected {spec.input_dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    return X


def _forward_pass(spec, theta, X):
    """Forward pass keeping pre-activations; returns (Z list, A list, output)."""
    mats, w_out = unpack_params(spec, theta)
    scales = _layer_scales(spec)
    Zs, As = [], []
    a = X
    for l, W in enumerate(mats):
        z = scales[l] * (a @ W.T)
        Zs.append(z)
        a = _act(spec, z)
        As.append(a)
    out = spec.output_scale * scales[-1] * (a @ w_out)
    return Zs, As, out


def forward_batch(spec, theta, X):
    """Network output at each row of X, scaled by the output multiplier."""
    X = _check_inputs(spec, X)
    return _forward_pass(spec, theta, X)[2]


def forward(spec, theta, x):
    """Scalar network output at a single input."""
    return float(forward_batch(spec, theta, np.atleast_2d(x))[0])


def vjp_batch(spec, theta, X, weights):
    """Weighted sum of per-input parameter gradients: sum_i weights[i] * grad f(x_i).

    One reverse pass over the batch; O(n * p) work without materializing
    the n x p Jacobian.
    """
    X = _check_inputs(spec, X)
    weights = np.asarray(weights, dtype=float)
    mats, w_out = unpack_params(spec, theta)
    scales = _layer_scales(spec)
    Zs, As, _ = _forward_pass(spec, theta, X)

    beta_s = spec.output_scale * scales[-1]
    g_out = beta_s * (weights @ As[-1])                       # (m,)
    # upstream gradient w.r.t. final hidden activations, per input
    ga = beta_s * np.outer(weights, w_out)                    # (n, m)
    grads = [None] * len(mats)
    for l in range(len(mats) - 1, -1, -1):
        gz = ga * _act_deriv(spec, Zs[l])                     # (n, m)
        below = X if l == 0 else As[l - 1]
        grads[l] = scales[l] * (gz.T @ below)
        if l > 0:
            ga = scales[l] * (gz @ mats[l])
    return pack_params(spec, grads, g_out)


def param_gradient(spec, theta, x):
    """Exact gradient of forward(spec, theta, x) w.r.t. every parameter."""
    return vjp_batch(spec, theta, np.atleast_2d(x), np.ones(1))


def jvp_batch(spec, theta, X, v):
    """Directional derivative <grad f(x_i; theta), v> for each row of X.

    Forward-mode pass; used for the tangent-feature correction term
    without forming per-input gradients.
    """
    X = _check_inputs(spec, X)
    mats, w_out = unpack_params(spec, theta)
    dmats, dw_out = unpack_params(spec, np.asarray(v, dtype=float))
    scales = _layer_scales(spec)

    a = X
    da = np.zeros_like(X)
    for l, (W, dW) in enumerate(zip(mats, dmats)):
        z = scales[l] * (a @ W.T)
        dz = scales[l] * (da @ W.T + a @ dW.T)
        da = _act_deriv(spec, z) * dz
        a = _act(spec, z)
    return spec.output_scale * scales[-1] * (da @ w_out + a @ dw_out)
