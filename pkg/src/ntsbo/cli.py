"""Command-line entry point: run | bench | serve | replay."""

import argparse
import csv
import hashlib
import json
import sys

import numpy as np
import yaml

from ntsbo.config import ConfigError, load_run_config, parse_run_config
from ntsbo.engine import run_campaign, init_stage, config_digest, regret_metrics
from ntsbo.protocol import (
    FilePairTransport,
    StdioTransport,
    ProtocolError,
    make_ask_tell_query,
)
from ntsbo.traceio import read_trace, write_summary, write_trace


def _summary_of(config, objective, trace):
    out = {
        "algorithm": config.algorithm,
        "horizon": config.horizon,
        "batch_size": config.batch_size,
        "master_seed": config.master_seed,
        "config_digest": config_digest(config),
        "evaluations": len(trace.rows),
    }
    if trace.f_star is not None:
        out["f_star"] = trace.f_star
        out["final_cumulative_regret"] = trace.rows[-1]["cum_regret"]
        out["final_simple_regret"] = trace.rows[-1]["simple_regret"]
    return out


def cmd_run(args):
    config, objective, outputs = load_run_config(args.config)
    if objective.truth is None:
        raise ConfigError("objective kind 'external' requires the serve command")
    trace = run_campaign(objective, config, checkpoint_path=outputs["checkpoint"])
    if outputs["trace"]:
        write_trace(outputs["trace"], trace, objective.domain.dim)
    if outputs["summary"]:
        write_summary(outputs["summary"], _summary_of(config, objective, trace))
    return 0


def _init_set_hash(config, domain):
    points = init_stage(domain, config)
    blob = b"".join(np.ascontiguousarray(p.x_raw).tobytes() for p in points)
    return hashlib.sha256(blob).hexdigest()


_SUITE_KEYS = {"base", "algorithms", "seeds", "output_dir"}


def cmd_bench(args):
    with open(args.suite) as fh:
        suite = yaml.safe_load(fh)
    unknown = set(suite) - _SUITE_KEYS
    if unknown:
        raise ConfigError(f"unknown suite key {sorted(unknown)[0]!r}")
    base = suite["base"]
    algorithms = suite["algorithms"]
    seeds = [int(s) for s in suite["seeds"]]
    outdir = suite["output_dir"]
    import os
    os.makedirs(outdir, exist_ok=True)

    failures = []
    results = {}        # algorithm -> seed -> simple-regret series
    init_hashes = {}    # seed -> set of init hashes across algorithms
    for algo in algorithms:
        for seed in seeds:
            doc = dict(base)
            doc["algorithm"] = algo
            doc["master_seed"] = seed
            try:
                config, objective, _ = parse_run_config(doc)
                init_hashes.setdefault(seed, set()).add(
                    _init_set_hash(config, objective.domain))
                trace = run_campaign(objective, config)
                path = os.path.join(outdir, f"trace_{algo}_seed{seed}.csv")
                write_trace(path, trace, objective.domain.dim)
                results.setdefault(algo, {})[seed] = trace.simple
            except Exception as exc:     # report the failing cell, keep going
                failures.append({"algorithm": algo, "seed": seed, "error": str(exc)})

    agg_path = os.path.join(outdir, "aggregate.csv")
    with open(agg_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "evaluation", "median_simple_regret",
                    "q25_simple_regret", "q75_simple_regret"])
        for algo, per_seed in results.items():
            series = np.stack(list(per_seed.values()))
            for k in range(series.shape[1]):
                col = series[:, k]
                w.writerow([algo, k + 1, repr(float(np.median(col))),
                            repr(float(np.quantile(col, 0.25))),
                            repr(float(np.quantile(col, 0.75)))])

    report = {
        "failures": failures,
        "paired_initialization": {str(s): len(h) == 1 for s, h in init_hashes.items()},
        "aggregate": agg_path,
    }
    write_summary(os.path.join(outdir, "report.json"), report)
    if failures:
        print(json.dumps(report["failures"], indent=2), file=sys.stderr)
        return 1
    return 0


def cmd_serve(args):
    config, objective, outputs = load_run_config(args.config)
    if args.ask_file and args.tell_file:
        transport = FilePairTransport(args.ask_file, args.tell_file,
                                      timeout=args.timeout)
    else:
        transport = StdioTransport()
    run_id = f"{config_digest(config)[:12]}-{config.master_seed}"
    query_fn = make_ask_tell_query(transport, run_id, timeout=args.timeout)
    trace = run_campaign(objective, config, checkpoint_path=outputs["checkpoint"],
                         query_fn=query_fn)
    if outputs["trace"]:
        write_trace(outputs["trace"], trace, objective.domain.dim)
    if outputs["summary"]:
        write_summary(outputs["summary"], _summary_of(config, objective, trace))
    return 0


def cmd_replay(args):
    rows = read_trace(args.trace)
    truths = [r["f_true"] for r in rows]
    if any(v is None for v in truths):
        print("trace has no ground-truth column; nothing to recompute",
              file=sys.stderr)
        return 1
    f_star = args.f_star if args.f_star is not None else max(truths)
    R, S = regret_metrics(truths, f_star)
    out = {"f_star": f_star,
           "cumulative_regret": [float(v) for v in R],
           "simple_regret": [float(v) for v in S]}
    if args.output:
        write_summary(args.output, out)
    else:
        json.dump(out, sys.stdout, indent=2)
        print()
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ntsbo",
                                description="Batch neural Thompson-sampling "
                                            "black-box optimization")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one campaign from a config file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="run an algorithms x seeds comparison suite")
    bench.add_argument("suite")
    bench.set_defaults(func=cmd_bench)

    serve = sub.add_parser("serve", help="drive an external objective over ask/tell")
    serve.add_argument("config")
    serve.add_argument("--ask-file", default=None)
    serve.add_argument("--tell-file", default=None)
    serve.add_argument("--timeout", type=float, default=60.0)
    serve.set_defaults(func=cmd_serve)

    replay = sub.add_parser("replay", help="recompute regret metrics from a trace")
    replay.add_argument("trace")
    replay.add_argument("--f-star", type=float, default=None)
    replay.add_argument("--output", default=None)
    replay.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ProtocolError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
