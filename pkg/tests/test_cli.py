from __future__ import annotations

import csv
from pathlib import Path

import pytest
import requests

from setwise_rerank.cli import main
from setwise_rerank.synth import SynthConfig, generate, write_world
from setwise_rerank.trec import read_run
from stub_server import StubServer

SMALL = ["--n-queries", "5", "--n-docs", "30", "--sigma", "0.75"]


@pytest.fixture
def world_files(tmp_path):
    return write_world(generate(SynthConfig(n_queries=4, n_docs=20, initial_noise=0.5, doc_tokens=3)), tmp_path / "w")


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRerank:
    def test_run_and_ledger(self, tmp_path):
        out = tmp_path / "o"
        code = main(["rerank", "--method", "setwise_heapsort", "--k", "10", *SMALL, "--out", str(out), "--perfect"])
        assert code == 0
        run = out / "setwise_heapsort-c3.run"
        assert len(run.read_text().splitlines()) == 5 * 10
        ledger = rows(out / "setwise_heapsort-c3.ledger.csv")
        assert [r["query_id"] for r in ledger] == sorted(r["query_id"] for r in ledger)
        assert list(ledger[0]) == [
            "query_id", "method", "calls_select", "calls_rank", "calls_score",
            "docs", "prompt_tokens", "output_tokens", "promotions", "wall_ms",
        ]
        assert all(int(r["calls_select"]) > 0 for r in ledger)

    def test_deterministic(self, tmp_path):
        args = ["rerank", "--method", "setwise_insertion", "--prior", *SMALL, "--temperature", "0.5", "--seed", "3"]
        assert main([*args, "--out", str(tmp_path / "a")]) == 0
        assert main([*args, "--out", str(tmp_path / "b")]) == 0
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_qrels_backed_simulation(self, tmp_path, world_files):
        code = main([
            "rerank", "--method", "pairwise_bubblesort", "--k", "3", "--perfect",
            "--run", str(world_files["run"]), "--qrels", str(world_files["qrels"]), "--out", str(tmp_path / "o"),
        ])
        assert code == 0
        run = read_run(tmp_path / "o" / "pairwise_bubblesort.run")
        assert len(run) == 4 and all(len(r) == 3 for r in run.values())


class TestErrors:
    def test_live_without_corpus_never_touches_network(self, tmp_path, world_files, monkeypatch, capsys):
        def boom(*a, **kw):
            raise AssertionError("network used")

        monkeypatch.setattr(requests, "post", boom)
        monkeypatch.setattr(requests.Session, "post", boom)
        code = main([
            "rerank", "--mode", "live", "--method", "setwise_heapsort", "--endpoint-url", "http://127.0.0.1:9",
            "--run", str(world_files["run"]), "--queries", str(world_files["queries"]), "--out", str(tmp_path),
        ])
        assert code == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_bad_k_is_config_error(self, tmp_path):
        assert main(["rerank", "--method", "setwise_heapsort", "--k", "0", *SMALL, "--out", str(tmp_path)]) == 2

    def test_empty_run_is_data_error(self, tmp_path, world_files):
        empty = tmp_path / "empty.run"
        empty.write_text("")
        assert main(["eval", "--run", str(empty), "--qrels", str(world_files["qrels"])]) == 3

    def test_missing_file_is_data_error(self, tmp_path, world_files):
        assert main(["eval", "--run", str(tmp_path / "nope.run"), "--qrels", str(world_files["qrels"])]) == 3

    def test_bad_line_reports_line_number(self, tmp_path, world_files, capsys):
        bad = tmp_path / "bad.run"
        bad.write_text("q0 Q0 d 1 1.0 t\nq0 Q0 d2 1\n")
        assert main(["eval", "--run", str(bad), "--qrels", str(world_files["qrels"])]) == 3
        assert "bad.run:2:" in capsys.readouterr().err

    def test_transport_failure_is_oracle_error(self, tmp_path, world_files):
        code = main([
            "rerank", "--mode", "live", "--method", "setwise_heapsort", "--endpoint-url", "http://127.0.0.1:9",
            "--max-retries", "0", "--timeout", "2", "--run", str(world_files["run"]),
            "--corpus", str(world_files["corpus"]), "--queries", str(world_files["queries"]),
            "--out", str(tmp_path / "o"), "--workers", "1",
        ])
        assert code == 4
        assert not (tmp_path / "o" / "setwise_heapsort-c3.run").exists()

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('methods = ["setwise_heapsort"]\nbogus = 1\n')
        assert main(["rerank", "--config", str(cfg), "--out", str(tmp_path)]) == 2


class TestLive:
    def test_end_to_end_against_stub(self, tmp_path, world_files):
        with StubServer([(200, {"text": "Passage A"})]) as srv:
            code = main([
                "rerank", "--mode", "live", "--method", "setwise_heapsort", "--k", "5",
                "--endpoint-url", srv.url, "--run", str(world_files["run"]),
                "--corpus", str(world_files["corpus"]), "--queries", str(world_files["queries"]),
                "--out", str(tmp_path / "o"),
            ])
            assert code == 0
            ledger = rows(tmp_path / "o" / "setwise_heapsort-c3.ledger.csv")
            assert sum(int(r["calls_select"]) for r in ledger) == len(srv.requests)


class TestConfigFile:
    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(
            'methods = ["setwise_heapsort", {method = "setwise_insertion", use_prior = true}]\n'
            "reps = 1\nseed = 4\n"
            "[defaults]\nk = 7\n"
            "[synth]\nn_queries = 3\nn_docs = 25\ninitial_noise = 0.5\n"
            "[noise]\nperfect = true\n"
        )
        assert main(["rerank", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        run = read_run(tmp_path / "a" / "setwise_insertion-c3-max-prior.run")
        assert {len(r) for r in run.values()} == {7}
        assert main(["rerank", "--config", str(cfg), "--k", "4", "--out", str(tmp_path / "b")]) == 0
        run = read_run(tmp_path / "b" / "setwise_heapsort-c3.run")
        assert {len(r) for r in run.values()} == {4}
        assert len(run) == 3


class TestBench:
    def test_tables_and_single_rep_flag(self, tmp_path, capsys):
        out = tmp_path / "b"
        code = main([
            "bench", "--method", "setwise_heapsort", "--method", "setwise_insertion", "--prior",
            *SMALL, "--reps", "1", "--out", str(out), "--perfect",
        ])
        assert code == 0
        table = rows(out / "bench.csv")
        assert {r["ci_flag"] for r in table} == {"single_rep"}
        assert all(float(r["ci95"]) == 0.0 for r in table)
        calls = {r["method"]: float(r["mean"]) for r in table if r["metric"] == "inferences"}
        assert calls["setwise_insertion-c3-max-prior"] < calls["setwise_heapsort-c3-prior"]
        assert "inferences" in capsys.readouterr().out
        headline = rows(out / "headline.csv")
        assert headline

    def test_table_values_reproduce_from_per_query_csv(self, tmp_path):
        out = tmp_path / "b"
        assert main(["bench", "--method", "setwise_heapsort", "--method", "pairwise_heapsort",
                     *SMALL, "--reps", "2", "--out", str(out), "--temperature", "0.5"]) == 0
        per_query = rows(out / "per_query.csv")
        for r in rows(out / "bench.csv"):
            reps: dict[str, list[float]] = {}
            for p in per_query:
                if p["method"] == r["method"] and p["metric"] == r["metric"]:
                    reps.setdefault(p["rep"], []).append(float(p["value"]))
            assert len(reps) == 2
            # mean over queries within a rep, then over reps
            rep_means = [sum(v) / len(v) for v in reps.values()]
            assert float(r["mean"]) == pytest.approx(sum(rep_means) / len(rep_means))

    def test_duplicate_method_rows_identical(self, tmp_path):
        out = tmp_path / "b"
        assert main(["bench", "--method", "setwise_heapsort", "--method", "setwise_heapsort",
                     *SMALL, "--reps", "2", "--out", str(out), "--temperature", "0.5"]) == 0
        table = rows(out / "bench.csv")
        a = [(r["metric"], r["mean"]) for r in table if r["method"] == "setwise_heapsort-c3" and r["metric"] != "time_ms"]
        b = [(r["metric"], r["mean"]) for r in table if r["method"] == "setwise_heapsort-c3#2" and r["metric"] != "time_ms"]
        assert a == b and a

    def test_needs_two_methods(self, tmp_path):
        assert main(["bench", "--method", "setwise_heapsort", *SMALL, "--out", str(tmp_path)]) == 2


class TestEvalAndSynth:
    def test_ideal_run_scores_one(self, tmp_path, capsys):
        world = generate(SynthConfig(n_queries=3, n_docs=15, initial_noise=0.0))
        paths = write_world(world, tmp_path)
        out = tmp_path / "m.csv"
        assert main(["eval", "--run", str(paths["run"]), "--qrels", str(paths["qrels"]), "--out", str(out)]) == 0
        agg = [r for r in rows(out) if r["query_id"] == "all" and r["metric"] == "ndcg@10"]
        assert float(agg[0]["value"]) == 1.0
        assert "ndcg@10" in capsys.readouterr().out

    def test_synth_calibrated(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path), "--n-queries", "20", "--tau-target", "0.8"]) == 0
        out = capsys.readouterr().out
        tau = float(out.split("mean_tau\t")[1])
        assert 0.7 <= tau <= 0.9
        assert sorted(p.name for p in Path(tmp_path).iterdir()) == [
            "corpus.jsonl", "initial.run", "qrels.txt", "queries.tsv",
        ]
