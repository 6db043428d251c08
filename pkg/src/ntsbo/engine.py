"""Synchronous batch Thompson-sampling loop, baselines, and regret accounting."""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from ntsbo.network import NetworkSpec, init_params
from ntsbo.kernels import se_gram, make_rff_basis, rff_features, tangent_features
from ntsbo.gp import gp_posterior, chol_with_jitter, uncertainty_sampling
from ntsbo.training import (
    TrainConfig,
    AcquisitionSample,
    draw_acquisition_bnts,
    draw_acquisition_linear,
    draw_acquisition_deep_ensemble,
)

ALGORITHMS = ("sto-bnts", "sto-bnts-linear", "deep-ensemble",
              "gp-ts", "gp-ucb", "random")
BETA_MODES = ("practical-one", "theoretical-t1", "theoretical-t2")

# named RNG stream tags, combined with the master seed
STREAM_INIT = 1
STREAM_DRAW = 2
STREAM_NOISE = 3
STREAM_SEARCH = 4


def stream_seed(master_seed, *path):
    """Deterministic child seed for a named stream; independent of call order."""
    ss = np.random.SeedSequence([int(master_seed)] + [int(p) for p in path])
    return int(ss.generate_state(1)[0])


def stream_rng(master_seed, *path):
    return np.random.default_rng(stream_seed(master_seed, *path))


# ---------------------------------------------------------------------------
# domain


@dataclass
class Domain:
    """Query domain; inputs are affinely normalized into the unit ball."""

    kind: str                       # "discrete" | "box"
    points: np.ndarray = None       # (n, d) raw coordinates, discrete only
    bounds: np.ndarray = None       # (d, 2)
    _normalized: np.ndarray = field(default=None, repr=False)

    @staticmethod
    def discrete(points, bounds=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if bounds is None:
            lo, hi = points.min(axis=0), points.max(axis=0)
            bounds = np.stack([lo, hi], axis=1)
        return Domain("discrete", points=points, bounds=np.asarray(bounds, dtype=float))

    @staticmethod
    def box(bounds):
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        if np.any(bounds[:, 1] < bounds[:, 0]):
            raise ValueError("upper bounds below lower bounds")
        return Domain("box", bounds=bounds)

    @property
    def dim(self):
        return self.bounds.shape[0]

    @property
    def size(self):
        return self.points.shape[0] if self.kind == "discrete" else None

    def normalize(self, X):
        """Map raw coordinates into the d-dimensional unit ball."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        center = 0.5 * (self.bounds[:, 0] + self.bounds[:, 1])
        halfrange = np.maximum(0.5 * (self.bounds[:, 1] - self.bounds[:, 0]), 1e-12)
        return (X - center) / halfrange / np.sqrt(self.dim)

    @property
    def normalized(self):
        if self._normalized is None:
            if self.kind != "discrete":
                raise ValueError("normalized point list exists only for discrete domains")
            self._normalized = self.normalize(self.points)
        return self._normalized


def discretize_domain(bounds, horizon, grid_cap=1_000_000):
    """Regular grid with spacing 1/sqrt(horizon) per dimension over a box."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    spacing = 1.0 / math.sqrt(horizon)
    axes = []
    total = 1
    for lo, hi in bounds:
        n = int(np.floor((hi - lo) / spacing + 1e-9)) + 1
        axes.append(np.minimum(lo + spacing * np.arange(n), hi))
        total *= n
        if total > grid_cap:
            raise ValueError(f"grid cardinality exceeds cap {grid_cap}")
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return Domain.discrete(points, bounds=bounds)


# ---------------------------------------------------------------------------
# history and regret bookkeeping


@dataclass
class HistoryEntry:
    x: np.ndarray          # normalized input (what surrogates consume)
    x_raw: np.ndarray
    y: float
    t: int                 # 0 for initialization entries
    slot: int
    index: int = None      # domain index for discrete domains
    f_true: float = None


@dataclass
class History:
    entries: list = field(default_factory=list)

    def add(self, entry):
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    @property
    def completed_through(self):
        return max((e.t for e in self.entries), default=-1)

    def training_arrays(self):
        if not self.entries:
            return np.empty((0, 0)), np.empty(0)
        X = np.stack([e.x for e in self.entries])
        y = np.array([e.y for e in self.entries])
        return X, y

    def raw_arrays(self):
        if not self.entries:
            return np.empty((0, 0)), np.empty(0)
        X = np.stack([e.x_raw for e in self.entries])
        y = np.array([e.y for e in self.entries])
        return X, y


@dataclass
class RegretTrace:
    """Per-evaluation record with cumulative and simple regret series."""

    rows: list = field(default_factory=list)     # dicts, one per evaluation
    f_star: float = None

    def append(self, t, slot, x_raw, y, f_true):
        cum = simple = None
        if self.f_star is not None and f_true is not None:
            inst = self.f_star - f_true
            prev_cum = self.rows[-1]["cum_regret"] if self.rows else 0.0
            prev_simple = self.rows[-1]["simple_regret"] if self.rows else np.inf
            cum = prev_cum + inst
            simple = min(prev_simple, inst)
        self.rows.append({
            "t": t, "i": slot, "x": np.asarray(x_raw, dtype=float),
            "y": float(y), "f_true": None if f_true is None else float(f_true),
            "cum_regret": cum, "simple_regret": simple,
        })

    @property
    def cumulative(self):
        return np.array([r["cum_regret"] for r in self.rows], dtype=float)

    @property
    def simple(self):
        return np.array([r["simple_regret"] for r in self.rows], dtype=float)

    def best_regret_by_iteration(self):
        """Running-best instantaneous regret, one value per completed iteration."""
        best = np.inf
        out = []
        current_t = None
        for r in self.rows:
            best = min(best, self.f_star - r["f_true"])
            if current_t is None or r["t"] != current_t:
                current_t = r["t"]
                out.append(best)
            else:
                out[-1] = best
        return np.array(out)


def regret_metrics(true_values, f_star):
    """Cumulative and simple regret series from per-evaluation true values."""
    vals = np.asarray(true_values, dtype=float)
    if vals.size == 0:
        return np.empty(0), np.empty(0)
    inst = f_star - vals
    return np.cumsum(inst), np.minimum.accumulate(inst)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EngineConfig:
    algorithm: str
    horizon: int
    batch_size: int = 1
    delta: float = 0.1
    beta_mode: str = "practical-one"
    init_mode: str = "none"          # none | random | uncertainty
    init_budget: int = 0
    depth: int = 2
    width: int = 256
    activation: str = "relu"
    noise_var: float = 0.01
    lengthscale: float = 0.1         # SE kernel for GP baselines
    gp_sampler: str = "exact"        # exact | rff
    num_rff: int = 1000
    step_size: float = 1.0
    max_steps: int = 100_000
    grad_tol: float = None
    linear_trainer: str = "closed-form"
    num_probes: int = 10_000
    num_restarts: int = 100
    master_seed: int = 0
    perturb_targets: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.beta_mode not in BETA_MODES:
            raise ValueError(f"unknown beta mode {self.beta_mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.horizon % self.batch_size:
            raise ValueError("horizon must be a multiple of batch_size")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.init_mode not in ("none", "random", "uncertainty"):
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.init_mode != "none" and self.init_budget < 1:
            raise ValueError("init budget must be >= 1")

    def network_spec(self, input_dim, beta=1.0):
        return NetworkSpec(self.depth, self.width, input_dim, self.activation, beta)

    def train_config(self, beta):
        return TrainConfig(step_size=self.step_size, max_steps=self.max_steps,
                           grad_tol=self.grad_tol, noise_var=self.noise_var,
                           beta=beta)


def beta_schedule(t, domain_card, delta, mode):
    """Per-iteration output multiplier under the selected schedule."""
    if t < 1 or domain_card < 1:
        raise ValueError("t and domain cardinality must be >= 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if mode == "practical-one":
        return 1.0
    arg = math.pi ** 2 * t ** 2 * domain_card / (3.0 * delta)
    if mode == "theoretical-t1":
        return 2.0 * math.log(arg)
    if mode == "theoretical-t2":
        return 2.0 * math.log(2.0 * arg)
    raise ValueError(f"unknown beta mode {mode!r}")


# ---------------------------------------------------------------------------
# acquisition maximization


@dataclass
class SelectedPoint:
    x_raw: np.ndarray
    x: np.ndarray
    index: int            # None for box domains
    value: float


def maximize_acquisition(sample, domain, num_probes=10_000, num_restarts=100, rng=None):
    """Argmax of an acquisition evaluator over the domain.

    Discrete domains are enumerated exactly (lowest index wins ties).  Box
    domains are probed at random and the best probes refined with
    box-constrained L-BFGS; the result never falls below the best probe.
    """
    if domain.kind == "discrete":
        vals = np.asarray(sample(domain.normalized), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("acquisition evaluator returned non-finite values")
        idx = int(np.argmax(vals))
        return SelectedPoint(domain.points[idx].copy(), domain.normalized[idx].copy(),
                             idx, float(vals[idx]))

    if rng is None:
        rng = np.random.default_rng()
    lo, hi = domain.bounds[:, 0], domain.bounds[:, 1]
    probes = rng.uniform(lo, hi, size=(num_probes, domain.dim))
    vals = np.asarray(sample(domain.normalize(probes)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("acquisition evaluator returned non-finite values")
    order = np.argsort(-vals)
    best_x = probes[order[0]]
    best_val = float(vals[order[0]])

    def negobj(x_raw):
        return -float(sample(domain.normalize(x_raw[None]))[0])

    for k in order[:num_restarts]:
        res = minimize(negobj, probes[k], method="L-BFGS-B",
                       bounds=list(zip(lo, hi)))
        if -res.fun > best_val:
            best_val = float(-res.fun)
            best_x = np.clip(res.x, lo, hi)
    return SelectedPoint(best_x.copy(), domain.normalize(best_x[None])[0], None, best_val)


# ---------------------------------------------------------------------------
# GP baselines


def _se_kernel_fn(lengthscale):
    return lambda A, B: se_gram(A, B, lengthscale)


def _effective_cardinality(domain, horizon):
    if domain.kind == "discrete":
        return domain.size
    return max(2, int(math.ceil(horizon ** (domain.dim / 2.0))))


def gp_ts_step(history, config, domain, t):
    """One Thompson-sampling slot with the SE-kernel GP surrogate."""
    beta = beta_schedule(t, _effective_cardinality(domain, config.horizon),
                         config.delta, config.beta_mode)
    Xtr, y = history.raw_arrays()
    rng = stream_rng(config.master_seed, STREAM_DRAW, t, 0)
    sample = _gp_ts_sample(Xtr, y, config, domain, beta, rng)
    return maximize_acquisition(sample, domain, config.num_probes, config.num_restarts,
                                rng=stream_rng(config.master_seed, STREAM_SEARCH, t, 0))


def _gp_ts_sample(Xtr, y, config, domain, beta, rng, slot=0):
    kernel = _se_kernel_fn(config.lengthscale)
    if config.gp_sampler == "exact":
        if domain.kind != "discrete":
            raise ValueError("exact GP-TS sampling requires a discrete domain")
        post = gp_posterior(kernel, Xtr, y, config.noise_var, beta, domain.points)
        draw = post.mean + chol_with_jitter(post.covariance) @ rng.standard_normal(
            domain.size)
        table = {"draw": draw}

        def evaluator(Xq):
            # evaluator is indexed by grid position; Xq rows are grid points
            return table["draw"][_match_rows(domain.normalized, Xq)]

        return AcquisitionSample("gp-ts", evaluator)

    basis = make_rff_basis(config.num_rff, domain.dim,
                           config.lengthscale, rng.integers(2 ** 63))
    Xtr = np.atleast_2d(Xtr) if len(y) else np.empty((0, domain.dim))
    Ptr = rff_features(Xtr, basis) if len(y) else np.empty((0, basis.num_features))
    M = basis.num_features
    A = Ptr.T @ Ptr + config.noise_var * np.eye(M)
    L = chol_with_jitter(A)
    mean_w = cho_solve((L, True), Ptr.T @ y) if len(y) else np.zeros(M)
    # weight posterior covariance is sigma^2 A^{-1}; sample via triangular solve
    z = rng.standard_normal(M)
    w = mean_w + beta * np.sqrt(config.noise_var) * solve_triangular(L.T, z, lower=False)
    table = {"w": w}

    def evaluator(Xq):
        Xraw = _raw_coords(domain, Xq)
        return rff_features(Xraw, basis) @ table["w"]

    return AcquisitionSample("gp-ts", evaluator)


def gp_ucb_step(history, config, domain, t):
    """One upper-confidence-bound slot with the SE-kernel GP surrogate."""
    beta = beta_schedule(t, _effective_cardinality(domain, config.horizon),
                         config.delta, config.beta_mode)
    Xtr, y = history.raw_arrays()
    kernel = _se_kernel_fn(config.lengthscale)

    def evaluator(Xq):
        Xraw = _raw_coords(domain, Xq)
        post = gp_posterior(kernel, Xtr, y, config.noise_var, 1.0, Xraw)
        sd = np.sqrt(np.maximum(post.variance, 0.0))
        return post.mean + math.sqrt(beta) * sd

    sample = AcquisitionSample("gp-ucb", evaluator)
    return maximize_acquisition(sample, domain, config.num_probes, config.num_restarts,
                                rng=stream_rng(config.master_seed, STREAM_SEARCH, t, 0))


def _match_rows(table, Xq):
    """Indices of query rows within a table of normalized domain points."""
    Xq = np.atleast_2d(Xq)
    # exact match lookup; domain-normalized queries always originate from the table
    lookup = {row.tobytes(): i for i, row in enumerate(np.ascontiguousarray(table))}
    idx = np.empty(Xq.shape[0], dtype=int)
    for j, row in enumerate(np.ascontiguousarray(Xq)):
        idx[j] = lookup[row.tobytes()]
    return idx


def _raw_coords(domain, X_normalized):
    """Invert the unit-ball normalization."""
    X = np.atleast_2d(np.asarray(X_normalized, dtype=float))
    center = 0.5 * (domain.bounds[:, 0] + domain.bounds[:, 1])
    halfrange = np.maximum(0.5 * (domain.bounds[:, 1] - domain.bounds[:, 0]), 1e-12)
    return X * np.sqrt(domain.dim) * halfrange + center


# ---------------------------------------------------------------------------
# batch selection and the campaign loop


def _draw_sample(history, config, domain, t, slot):
    beta = beta_schedule(t, _effective_cardinality(domain, config.horizon),
                         config.delta, config.beta_mode)
    spec = config.network_spec(domain.dim)
    cfg = config.train_config(beta)
    s0 = stream_seed(config.master_seed, STREAM_DRAW, t, slot, 0)
    s1 = stream_seed(config.master_seed, STREAM_DRAW, t, slot, 1)
    pair = history.training_arrays()
    if config.algorithm == "sto-bnts":
        return draw_acquisition_bnts(pair, spec, cfg, s0, s1,
                                     perturb_targets=config.perturb_targets)
    if config.algorithm == "sto-bnts-linear":
        return draw_acquisition_linear(pair, spec, cfg, s1, s0,
                                       trainer=config.linear_trainer,
                                       perturb_targets=config.perturb_targets)
    if config.algorithm == "deep-ensemble":
        return draw_acquisition_deep_ensemble(pair, spec, cfg, s0,
                                              perturb_targets=config.perturb_targets)
    raise ValueError(f"{config.algorithm!r} does not use sample-then-optimize draws")


def select_batch(history, config, domain, t):
    """B independent acquisition draws against the same frozen history."""
    selected = []
    for slot in range(config.batch_size):
        if config.algorithm == "random":
            rng = stream_rng(config.master_seed, STREAM_SEARCH, t, slot)
            selected.append(_random_point(domain, rng))
        elif config.algorithm == "gp-ts":
            beta = beta_schedule(t, _effective_cardinality(domain, config.horizon),
                                 config.delta, config.beta_mode)
            Xtr, y = history.raw_arrays()
            rng = stream_rng(config.master_seed, STREAM_DRAW, t, slot)
            sample = _gp_ts_sample(Xtr, y, config, domain, beta, rng, slot)
            selected.append(maximize_acquisition(
                sample, domain, config.num_probes, config.num_restarts,
                rng=stream_rng(config.master_seed, STREAM_SEARCH, t, slot)))
        elif config.algorithm == "gp-ucb":
            selected.append(gp_ucb_step(history, config, domain, t))
        else:
            sample = _draw_sample(history, config, domain, t, slot)
            selected.append(maximize_acquisition(
                sample, domain, config.num_probes, config.num_restarts,
                rng=stream_rng(config.master_seed, STREAM_SEARCH, t, slot)))
    return selected


def _random_point(domain, rng):
    if domain.kind == "discrete":
        idx = int(rng.integers(domain.size))
        return SelectedPoint(domain.points[idx].copy(), domain.normalized[idx].copy(),
                             idx, float("nan"))
    lo, hi = domain.bounds[:, 0], domain.bounds[:, 1]
    x = rng.uniform(lo, hi)
    return SelectedPoint(x, domain.normalize(x[None])[0], None, float("nan"))


def init_stage(domain, config):
    """Initial query points shared by every algorithm under one master seed."""
    if config.init_mode == "none" or config.init_budget == 0:
        return []
    rng = stream_rng(config.master_seed, STREAM_INIT)
    if config.init_mode == "random":
        return [_random_point(domain, rng) for _ in range(config.init_budget)]
    if domain.kind != "discrete":
        raise ValueError("uncertainty-sampling initialization requires a discrete domain")
    if config.init_budget > domain.size:
        raise ValueError("init budget exceeds domain size")
    spec = config.network_spec(domain.dim)
    theta0 = init_params(spec, stream_seed(config.master_seed, STREAM_INIT, 1))
    feats = tangent_features(spec, theta0, domain.normalized)
    picks = uncertainty_sampling(feats, config.noise_var, config.init_budget)
    return [SelectedPoint(domain.points[i].copy(), domain.normalized[i].copy(), i,
                          float("nan")) for i in picks]


# ---------------------------------------------------------------------------
# objectives


@dataclass
class SyntheticObjective:
    """Ground-truth objective on a domain; the harness injects Gaussian noise."""

    domain: Domain
    truth: object                  # callable raw (n, d) -> (n,), or grid value array
    f_star: float = None

    def f_true(self, x_raw, index=None):
        if self.truth is None:
            return None
        if callable(self.truth):
            return float(self.truth(np.atleast_2d(np.asarray(x_raw, dtype=float)))[0])
        if index is None:
            raise ValueError("tabulated objective requires a domain index")
        return float(self.truth[index])


def make_gp_objective(domain, lengthscale, seed):
    """Objective tabulated as one GP-SE prior draw over a discrete domain."""
    from ntsbo.gp import sample_gp_prior
    gram = se_gram(domain.points, domain.points, lengthscale)
    values = sample_gp_prior(domain.points, gram, seed)
    return SyntheticObjective(domain, values, f_star=float(np.max(values)))


# ---------------------------------------------------------------------------
# checkpointing


class CheckpointError(RuntimeError):
    pass


def config_digest(config):
    payload = json.dumps({k: v for k, v in vars(config).items()}, sort_keys=True,
                         default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def _repr_float(v):
    # repr of a Python float round-trips exactly; numpy scalars do not
    return repr(float(v))


def _entry_to_json(e):
    return {"x": [_repr_float(v) for v in e.x],
            "x_raw": [_repr_float(v) for v in e.x_raw],
            "y": _repr_float(e.y), "t": e.t, "slot": e.slot, "index": e.index,
            "f_true": None if e.f_true is None else _repr_float(e.f_true)}


def _entry_from_json(d):
    return HistoryEntry(
        x=np.array([float(v) for v in d["x"]]),
        x_raw=np.array([float(v) for v in d["x_raw"]]),
        y=float(d["y"]), t=d["t"], slot=d["slot"], index=d["index"],
        f_true=None if d["f_true"] is None else float(d["f_true"]))


def write_checkpoint(path, config, history, trace, completed_t):
    payload = {
        "version": 1,
        "config_digest": config_digest(config),
        "completed_t": completed_t,
        "history": [_entry_to_json(e) for e in history.entries],
        "trace": [
            {"t": r["t"], "i": r["i"], "x": [_repr_float(v) for v in r["x"]],
             "y": _repr_float(r["y"]),
             "f_true": None if r["f_true"] is None else _repr_float(r["f_true"]),
             "cum_regret": (None if r["cum_regret"] is None
                            else _repr_float(r["cum_regret"])),
             "simple_regret": (None if r["simple_regret"] is None
                               else _repr_float(r["simple_regret"]))}
            for r in trace.rows
        ],
        "f_star": None if trace.f_star is None else _repr_float(trace.f_star),
    }
    body = json.dumps(payload, sort_keys=True)
    checksum = hashlib.sha256(body.encode()).hexdigest()
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump({"payload": payload, "checksum": checksum}, fh)
    os.replace(tmp, path)


def read_checkpoint(path, config):
    with open(path) as fh:
        doc = json.load(fh)
    payload = doc.get("payload")
    body = json.dumps(payload, sort_keys=True)
    if hashlib.sha256(body.encode()).hexdigest() != doc.get("checksum"):
        raise CheckpointError("checkpoint checksum mismatch")
    if payload["config_digest"] != config_digest(config):
        raise CheckpointError("checkpoint was written by a different configuration")
    history = History([_entry_from_json(d) for d in payload["history"]])
    trace = RegretTrace(f_star=None if payload["f_star"] is None
                        else float(payload["f_star"]))
    for r in payload["trace"]:
        trace.rows.append({
            "t": r["t"], "i": r["i"],
            "x": np.array([float(v) for v in r["x"]]),
            "y": float(r["y"]),
            "f_true": None if r["f_true"] is None else float(r["f_true"]),
            "cum_regret": None if r["cum_regret"] is None else float(r["cum_regret"]),
            "simple_regret": (None if r["simple_regret"] is None
                              else float(r["simple_regret"])),
        })
    return history, trace, payload["completed_t"]


# ---------------------------------------------------------------------------
# campaign


def run_campaign(objective, config, checkpoint_path=None, query_fn=None):
    """Initialization stage plus horizon/batch_size synchronous iterations.

    ``query_fn(t, selected_points) -> list of y`` overrides the default
    synthetic noisy query (used by the ask/tell transport).  Randomness is
    keyed by (master seed, stream, t, slot), so resuming from a checkpoint
    continues exactly where an uninterrupted run would be.
    """
    domain = objective.domain
    f_star = getattr(objective, "f_star", None)

    history, trace, start_t = History(), RegretTrace(f_star=f_star), 0
    if checkpoint_path and os.path.exists(checkpoint_path):
        history, trace, completed_t = read_checkpoint(checkpoint_path, config)
        start_t = completed_t + 1

    def commit(t, points, ys):
        truth_fn = getattr(objective, "f_true", None)
        for slot, (pt, y) in enumerate(zip(points, ys)):
            truth = truth_fn(pt.x_raw, pt.index) if truth_fn is not None else None
            history.add(HistoryEntry(pt.x, pt.x_raw, float(y), t, slot, pt.index, truth))
            trace.append(t, slot, pt.x_raw, y, truth)

    if start_t == 0:
        init_points = init_stage(domain, config)
        if init_points:
            if query_fn is not None:
                ys = query_fn(0, init_points)
            else:
                ys = _noisy_query(objective, config, 0, init_points)
            commit(0, init_points, ys)
        start_t = 1
        if checkpoint_path:
            write_checkpoint(checkpoint_path, config, history, trace, 0)

    num_iters = config.horizon // config.batch_size
    for t in range(start_t, num_iters + 1):
        points = select_batch(history, config, domain, t)
        if query_fn is not None:
            ys = query_fn(t, points)
        else:
            ys = _noisy_query(objective, config, t, points)
        commit(t, points, ys)
        if checkpoint_path:
            write_checkpoint(checkpoint_path, config, history, trace, t)
    return trace


def _noisy_query(objective, config, t, points):
    ys = []
    for slot, pt in enumerate(points):
        truth = objective.f_true(pt.x_raw, pt.index)
        if truth is None:
            raise ValueError("objective has no ground truth; supply a query_fn")
        rng = stream_rng(config.master_seed, STREAM_NOISE, t, slot)
        ys.append(truth + math.sqrt(config.noise_var) * rng.standard_normal())
    return ys
