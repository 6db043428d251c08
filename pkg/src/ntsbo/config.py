"""On-disk run configuration.

A run config is a YAML document mapping 1:1 onto EngineConfig plus the
objective selection and output paths.  Unknown keys are rejected so typos
fail loudly.  All randomness derives from the single ``master_seed``.
"""

import numpy as np
import yaml

from ntsbo.engine import (
    EngineConfig,
    Domain,
    discretize_domain,
    make_gp_objective,
    SyntheticObjective,
)


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"algorithm", "horizon", "batch_size", "delta", "beta_mode",
             "noise_var", "master_seed", "network", "train", "search", "init",
             "gp", "objective", "output", "checkpoint"}
_NETWORK_KEYS = {"depth", "width", "activation"}
_TRAIN_KEYS = {"step_size", "max_steps", "grad_tol", "linear_trainer",
               "perturb_targets"}
_SEARCH_KEYS = {"num_probes", "num_restarts"}
_INIT_KEYS = {"mode", "budget"}
_GP_KEYS = {"lengthscale", "sampler", "num_rff"}
_OBJECTIVE_KEYS = {"kind", "lengthscale", "grid_size", "bounds", "seed",
                   "discretize"}
_OUTPUT_KEYS = {"trace", "summary"}


def _check_keys(section, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in section {section!r}")


def load_run_config(path):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return parse_run_config(doc)


def parse_run_config(doc):
    """Validate a config mapping and build (EngineConfig, objective, outputs)."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    _check_keys("<top level>", doc, _TOP_KEYS)
    for sec, allowed in (("network", _NETWORK_KEYS), ("train", _TRAIN_KEYS),
                         ("search", _SEARCH_KEYS), ("init", _INIT_KEYS),
                         ("gp", _GP_KEYS), ("objective", _OBJECTIVE_KEYS),
                         ("output", _OUTPUT_KEYS)):
        if sec in doc and doc[sec] is not None:
            _check_keys(sec, doc[sec], allowed)

    for req in ("algorithm", "horizon", "objective"):
        if req not in doc:
            raise ConfigError(f"missing required key {req!r}")

    net = doc.get("network") or {}
    train = doc.get("train") or {}
    search = doc.get("search") or {}
    init = doc.get("init") or {}
    gp = doc.get("gp") or {}

    try:
        config = EngineConfig(
            algorithm=doc["algorithm"],
            horizon=int(doc["horizon"]),
            batch_size=int(doc.get("batch_size", 1)),
            delta=float(doc.get("delta", 0.1)),
            beta_mode=doc.get("beta_mode", "practical-one"),
            init_mode=init.get("mode", "none"),
            init_budget=int(init.get("budget", 0)),
            depth=int(net.get("depth", 2)),
            width=int(net.get("width", 256)),
            activation=net.get("activation", "relu"),
            noise_var=float(doc.get("noise_var", 0.01)),
            lengthscale=float(gp.get("lengthscale", 0.1)),
            gp_sampler=gp.get("sampler", "exact"),
            num_rff=int(gp.get("num_rff", 1000)),
            step_size=float(train.get("step_size", 1.0)),
            max_steps=int(train.get("max_steps", 100_000)),
            grad_tol=(None if train.get("grad_tol") is None
                      else float(train["grad_tol"])),
            linear_trainer=train.get("linear_trainer", "closed-form"),
            num_probes=int(search.get("num_probes", 10_000)),
            num_restarts=int(search.get("num_restarts", 100)),
            master_seed=int(doc.get("master_seed", 0)),
            perturb_targets=bool(train.get("perturb_targets", True)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    objective = build_objective(doc["objective"], config)
    outputs = doc.get("output") or {}
    return config, objective, {
        "trace": outputs.get("trace"),
        "summary": outputs.get("summary"),
        "checkpoint": doc.get("checkpoint"),
    }


def build_objective(spec, config):
    kind = spec.get("kind")
    bounds = spec.get("bounds")
    if kind == "synthetic-gp":
        if bounds is None:
            raise ConfigError("synthetic-gp objective requires bounds")
        bounds = np.asarray(bounds, dtype=float)
        grid_size = int(spec.get("grid_size", 1000))
        if bounds.shape[0] != 1:
            raise ConfigError("synthetic-gp grid objective supports 1-d bounds")
        grid = np.linspace(bounds[0, 0], bounds[0, 1], grid_size)[:, None]
        domain = Domain.discrete(grid, bounds=bounds)
        return make_gp_objective(domain, float(spec.get("lengthscale", 0.1)),
                                 int(spec.get("seed", 0)))
    if kind == "external":
        if bounds is None:
            raise ConfigError("external objective requires bounds")
        if spec.get("discretize"):
            domain = discretize_domain(bounds, config.horizon)
        else:
            domain = Domain.box(bounds)
        return SyntheticObjective(domain, truth=None, f_star=None)
    raise ConfigError(f"unknown objective kind {kind!r}")
