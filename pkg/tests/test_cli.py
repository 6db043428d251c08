import csv
import json
import threading

import numpy as np
import pytest
import yaml

from ntsbo.cli import main
from ntsbo.engine import RegretTrace
from ntsbo.protocol import (
    FilePairTransport,
    ProtocolError,
    make_ask_tell_query,
)
from ntsbo.traceio import read_trace, write_trace


def base_doc(**kw):
    doc = {
        "algorithm": "sto-bnts-linear",
        "horizon": 8,
        "batch_size": 2,
        "noise_var": 0.01,
        "master_seed": 3,
        "network": {"depth": 1, "width": 8, "activation": "relu"},
        "init": {"mode": "random", "budget": 2},
        "objective": {"kind": "synthetic-gp", "lengthscale": 0.1,
                      "grid_size": 40, "bounds": [[0.0, 1.0]], "seed": 3},
    }
    doc.update(kw)
    return doc


def write_config(path, doc):
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh)
    return str(path)


class TestRunCommand:
    def test_produces_trace_and_summary(self, tmp_path):
        trace_path = str(tmp_path / "trace.csv")
        summary_path = str(tmp_path / "summary.json")
        cfg = write_config(tmp_path / "run.yaml", base_doc(
            output={"trace": trace_path, "summary": summary_path}))
        assert main(["run", cfg]) == 0
        rows = read_trace(trace_path)
        assert len(rows) == 10        # 2 init + 8 budgeted queries
        summary = json.load(open(summary_path))
        assert summary["evaluations"] == 10
        assert summary["final_simple_regret"] >= 0

    def test_rerun_byte_identical(self, tmp_path):
        paths = [str(tmp_path / f"trace{k}.csv") for k in range(2)]
        for p in paths:
            cfg = write_config(tmp_path / "run.yaml", base_doc(output={"trace": p}))
            assert main(["run", cfg]) == 0
        assert open(paths[0], "rb").read() == open(paths[1], "rb").read()

    def test_unknown_key_named_in_error(self, tmp_path, capsys):
        doc = base_doc()
        doc["horzion"] = 8
        cfg = write_config(tmp_path / "bad.yaml", doc)
        assert main(["run", cfg]) == 2
        assert "horzion" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert main(["run", "/nonexistent/none.yaml"]) == 2

    def test_external_objective_rejected(self, tmp_path):
        doc = base_doc()
        doc["objective"] = {"kind": "external", "bounds": [[0.0, 1.0]]}
        cfg = write_config(tmp_path / "ext.yaml", doc)
        assert main(["run", cfg]) == 2


class TestBenchCommand:
    def test_small_suite(self, tmp_path):
        outdir = tmp_path / "bench"
        suite = {
            "base": base_doc(horizon=4, batch_size=1),
            "algorithms": ["random", "gp-ucb"],
            "seeds": [1, 2],
            "output_dir": str(outdir),
        }
        suite["base"].pop("algorithm")
        suite["base"].pop("master_seed")
        spath = write_config(tmp_path / "suite.yaml", suite)
        assert main(["bench", spath]) == 0

        for algo in ("random", "gp-ucb"):
            for seed in (1, 2):
                assert (outdir / f"trace_{algo}_seed{seed}.csv").exists()
        with open(outdir / "aggregate.csv") as fh:
            agg = list(csv.DictReader(fh))
        assert {r["algorithm"] for r in agg} == {"random", "gp-ucb"}
        assert all(float(r["q25_simple_regret"]) <= float(r["q75_simple_regret"])
                   for r in agg)
        report = json.load(open(outdir / "report.json"))
        assert report["failures"] == []
        # same seed => same initialization set no matter the algorithm
        assert report["paired_initialization"] == {"1": True, "2": True}

    def test_partial_failure_reported(self, tmp_path, capsys):
        outdir = tmp_path / "bench"
        bad_base = base_doc(horizon=4, batch_size=1)
        bad_base.pop("algorithm")
        suite = {
            "base": bad_base,
            "algorithms": ["random", "no-such-algorithm"],
            "seeds": [1],
            "output_dir": str(outdir),
        }
        spath = write_config(tmp_path / "suite.yaml", suite)
        assert main(["bench", spath]) == 1
        report = json.load(open(outdir / "report.json"))
        assert len(report["failures"]) == 1
        assert report["failures"][0]["algorithm"] == "no-such-algorithm"
        # the healthy cell still completed
        assert (outdir / "trace_random_seed1.csv").exists()


class TestReplayCommand:
    def test_recomputes_trace_metrics(self, tmp_path, capsys):
        trace_path = str(tmp_path / "trace.csv")
        cfg = write_config(tmp_path / "run.yaml",
                           base_doc(output={"trace": trace_path}))
        assert main(["run", cfg]) == 0
        assert main(["replay", trace_path]) == 0
        out = json.loads(capsys.readouterr().out)
        rows = read_trace(trace_path)
        # default f_star is the best truth seen in the trace itself, so the
        # recomputed series differs from the stored one only by a constant
        # per-step offset; with the true optimum supplied they must agree
        assert len(out["simple_regret"]) == len(rows)

        f_star = max(r["f_true"] for r in rows) + (
            rows[0]["cum_regret"] - (max(r["f_true"] for r in rows)
                                     - rows[0]["f_true"]))
        assert main(["replay", trace_path, "--f-star", repr(f_star)]) == 0
        out2 = json.loads(capsys.readouterr().out)
        for k, r in enumerate(rows):
            assert out2["cumulative_regret"][k] == pytest.approx(
                r["cum_regret"], rel=1e-9, abs=1e-9)
            assert out2["simple_regret"][k] == pytest.approx(
                r["simple_regret"], rel=1e-9, abs=1e-9)

    def test_output_file(self, tmp_path):
        trace_path = str(tmp_path / "trace.csv")
        cfg = write_config(tmp_path / "run.yaml",
                           base_doc(output={"trace": trace_path}))
        main(["run", cfg])
        out_path = str(tmp_path / "replay.json")
        assert main(["replay", trace_path, "--output", out_path]) == 0
        assert "simple_regret" in json.load(open(out_path))


def echo_responder(ask_file, tell_file, stop, value_fn):
    """Reads asks as they appear and writes matching tells."""
    consumed = 0
    while not stop.is_set():
        try:
            with open(ask_file) as fh:
                lines = fh.read().splitlines()
        except FileNotFoundError:
            lines = []
        for line in lines[consumed:]:
            msg = json.loads(line)
            y = value_fn(msg["x"])
            if y is None:           # responder gives up mid-run
                stop.set()
                return
            tell = {"type": "tell", "run_id": msg["run_id"], "t": msg["t"],
                    "i": msg["i"], "y": y}
            with open(tell_file, "a") as fh:
                fh.write(json.dumps(tell) + "\n")
            consumed += 1
        stop.wait(0.01)


class TestServeCommand:
    def _serve_doc(self, tmp_path, **kw):
        doc = base_doc(**kw)
        doc["objective"] = {"kind": "external", "bounds": [[0.0, 1.0]],
                            "discretize": True}
        return doc

    def test_full_campaign_over_files(self, tmp_path):
        trace_path = str(tmp_path / "trace.csv")
        doc = self._serve_doc(tmp_path, horizon=4, batch_size=2,
                              output={"trace": trace_path})
        cfg = write_config(tmp_path / "serve.yaml", doc)
        ask, tell = str(tmp_path / "asks"), str(tmp_path / "tells")
        stop = threading.Event()
        worker = threading.Thread(
            target=echo_responder,
            args=(ask, tell, stop, lambda x: -(x[0] - 0.4) ** 2))
        worker.start()
        try:
            rc = main(["serve", cfg, "--ask-file", ask, "--tell-file", tell,
                       "--timeout", "20"])
        finally:
            stop.set()
            worker.join()
        assert rc == 0
        rows = read_trace(trace_path)
        assert len(rows) == 6         # 2 init + 4 queried
        assert all(r["f_true"] is None for r in rows)

    def test_interrupt_and_resume_matches_straight_run(self, tmp_path):
        def run_once(subdir, break_after=None):
            d = tmp_path / subdir
            d.mkdir()
            trace_path = str(d / "trace.csv")
            ckpt = str(d / "ckpt.json")
            doc = self._serve_doc(tmp_path, horizon=6, batch_size=2,
                                  output={"trace": trace_path},
                                  checkpoint=ckpt)
            cfg = write_config(d / "serve.yaml", doc)
            ask, tell = str(d / "asks"), str(d / "tells")

            calls = {"n": 0}

            def value_fn(x):
                calls["n"] += 1
                return float(np.sin(7 * x[0]))

            if break_after is not None:
                # first pass: responder dies midway, serve times out
                stop = threading.Event()

                def limited(x):
                    if calls["n"] >= break_after:
                        return None
                    return value_fn(x)

                worker = threading.Thread(target=echo_responder,
                                          args=(ask, tell, stop, limited))
                worker.start()
                try:
                    rc = main(["serve", cfg, "--ask-file", ask,
                               "--tell-file", tell, "--timeout", "0.5"])
                finally:
                    stop.set()
                    worker.join()
                assert rc == 2        # timed out mid-campaign

            stop = threading.Event()
            worker = threading.Thread(target=echo_responder,
                                      args=(ask, tell, stop, value_fn))
            worker.start()
            try:
                rc = main(["serve", cfg, "--ask-file", ask, "--tell-file", tell,
                           "--timeout", "20"])
            finally:
                stop.set()
                worker.join()
            assert rc == 0
            return read_trace(trace_path)

        straight = run_once("straight")
        resumed = run_once("resumed", break_after=4)
        assert len(straight) == len(resumed)
        for a, b in zip(straight, resumed):
            assert a["x"] == b["x"]
            assert a["y"] == b["y"]

    def test_mismatched_tell_aborts(self, tmp_path):
        transport = FilePairTransport(str(tmp_path / "a"), str(tmp_path / "b"),
                                      timeout=1.0)
        with open(tmp_path / "b", "w") as fh:
            fh.write(json.dumps({"type": "tell", "run_id": "other", "t": 1,
                                 "i": 0, "y": 0.0}) + "\n")
        query = make_ask_tell_query(transport, "me", timeout=1.0)

        class P:
            x_raw = np.array([0.5])

        with pytest.raises(ProtocolError, match="does not match"):
            query(1, [P()])

    def test_malformed_tell_aborts(self, tmp_path):
        transport = FilePairTransport(str(tmp_path / "a"), str(tmp_path / "b"),
                                      timeout=1.0)
        with open(tmp_path / "b", "w") as fh:
            fh.write("not json\n")
        query = make_ask_tell_query(transport, "me", timeout=1.0)

        class P:
            x_raw = np.array([0.5])

        with pytest.raises(ProtocolError, match="malformed"):
            query(1, [P()])

    def test_out_of_order_tells_commit_in_slot_order(self, tmp_path):
        transport = FilePairTransport(str(tmp_path / "a"), str(tmp_path / "b"),
                                      timeout=1.0)
        tells = [{"type": "tell", "run_id": "me", "t": 2, "i": 1, "y": 10.0},
                 {"type": "tell", "run_id": "me", "t": 2, "i": 0, "y": 20.0}]
        with open(tmp_path / "b", "w") as fh:
            for m in tells:
                fh.write(json.dumps(m) + "\n")
        query = make_ask_tell_query(transport, "me", timeout=1.0)

        class P:
            x_raw = np.array([0.5])

        assert query(2, [P(), P()]) == [20.0, 10.0]


class TestTraceRoundTrip:
    def test_lossless(self, tmp_path):
        rng = np.random.default_rng(0)
        trace = RegretTrace(f_star=1.2345)
        for t in range(3):
            for i in range(2):
                trace.append(t, i, rng.normal(size=2), float(rng.normal()),
                             float(rng.normal()))
        path = str(tmp_path / "t.csv")
        write_trace(path, trace, 2)
        rows = read_trace(path)
        assert len(rows) == 6
        for r, orig in zip(rows, trace.rows):
            assert list(r["x"]) == [float(v) for v in orig["x"]]
            assert r["y"] == orig["y"]
            assert r["cum_regret"] == orig["cum_regret"]
            assert r["simple_regret"] == orig["simple_regret"]
