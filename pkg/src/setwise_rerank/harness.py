"""Experiment plumbing shared by the command-line tools.

A :class:`RunSpec` names the data (a synthetic world or TREC files), the
methods, the oracle and the output directory.  :func:`run_method` reranks
every query with a worker pool and returns outcomes keyed by query id, so
the result never depends on thread scheduling.

In simulate mode the time columns of every CSV hold a *modeled* latency
computed from the cost ledger (:class:`LatencyModel`), which keeps the
files byte-identical across runs.  Measured wall time is only logged.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .algorithms import RerankOutcome, rerank
from .client import EndpointConfig, EndpointOracle
from .core import AlgorithmConfig, CostLedger, Document, Qrels, Query, Ranking, order_by_ranking
from .errors import ConfigError, DataError
from .eval import (
    MetricReport,
    aggregate,
    evaluate_run,
    fingerprint,
    fmt,
    mean_ci,
    ndcg_at_k,
    write_metric_csv,
)
from .oracle import NoiseModel, Oracle, PerfectOracle, SimulatedOracle
from .synth import SynthConfig, generate, tau_target_calibrate
from .trec import atomic_write, read_corpus, read_qrels, read_queries, read_run, write_run

log = logging.getLogger(__name__)

SIMULATE = "simulate"
LIVE = "live"
MODES = (SIMULATE, LIVE)

LEDGER_HEADER = (
    "query_id", "method", "calls_select", "calls_rank", "calls_score", "docs",
    "prompt_tokens", "output_tokens", "promotions", "wall_ms",
)
BENCH_HEADER = ("method", "metric", "mean", "ci95", "reps", "ci_flag")
PER_QUERY_HEADER = ("method", "rep", "query_id", "metric", "value")


@dataclass(frozen=True)
class LatencyModel:
    """Stand-in for inference time in simulate mode, in milliseconds.

    The constants are illustrative, not measurements of any model: a fixed
    cost per call, a prefill cost per prompt token and a decode cost per
    generated token.
    """

    per_call_ms: float = 40.0
    per_prompt_token_ms: float = 0.02
    per_output_token_ms: float = 15.0

    def ms(self, ledger: CostLedger) -> float:
        return (
            ledger.total_calls * self.per_call_ms
            + ledger.prompt_tokens * self.per_prompt_token_ms
            + ledger.output_tokens * self.per_output_token_ms
        )


@dataclass
class RunSpec:
    mode: str = SIMULATE
    methods: list[AlgorithmConfig] = field(default_factory=list)
    synth: SynthConfig | None = None
    tau_target: float | None = None
    run_path: str | None = None
    qrels_path: str | None = None
    corpus_path: str | None = None
    queries_path: str | None = None
    reps: int = 3
    out_dir: str = "out"
    seed: int = 0
    workers: int = 0
    noise: NoiseModel | None = None
    endpoint: EndpointConfig | None = None
    eval_k: int = 10
    latency: LatencyModel = field(default_factory=LatencyModel)

    def validate(self) -> RunSpec:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.mode == LIVE:
            if self.endpoint is None:
                raise ConfigError("live mode needs an endpoint configuration")
            if not self.corpus_path:
                raise ConfigError("live mode needs a corpus file with document text")
            if not self.run_path:
                raise ConfigError("live mode needs a first-stage run file")
            if not self.queries_path:
                raise ConfigError("live mode needs a queries file with query text")
        elif self.synth is None and not (self.run_path and self.qrels_path):
            raise ConfigError("simulate mode needs a synthetic world or a run file plus qrels")
        return self

    def pool_size(self) -> int:
        return self.workers or os.cpu_count() or 1


@dataclass
class World:
    queries: list[Query]
    initial: dict[str, Ranking]
    docs: dict[str, dict[str, Document]]
    qrels: Qrels | None

    def first_stage(self, query_id: str) -> list[Document]:
        return order_by_ranking(self.initial[query_id], self.docs[query_id])


def load_world(spec: RunSpec) -> World:
    """Materialise queries, first-stage rankings, documents and judgments."""
    if spec.synth is not None and not spec.run_path:
        cfg = spec.synth
        if spec.tau_target is not None:
            sigma = tau_target_calibrate(spec.tau_target, cfg)
            log.info("calibrated initial_noise=%.6f for target agreement %.3f", sigma, spec.tau_target)
            cfg = cfg.with_noise(sigma)
        w = generate(cfg)
        return World(w.queries, w.initial, w.docs_by_id, w.qrels)

    assert spec.run_path is not None
    initial = read_run(spec.run_path)
    qrels = read_qrels(spec.qrels_path) if spec.qrels_path else None
    corpus = read_corpus(spec.corpus_path) if spec.corpus_path else None
    texts = read_queries(spec.queries_path) if spec.queries_path else {}
    queries, docs = [], {}
    for qid in sorted(initial):
        if spec.mode == LIVE and qid not in texts:
            raise DataError(f"query {qid!r} has no text in {spec.queries_path}")
        queries.append(Query(qid, texts.get(qid, "")))
        ids = initial[qid].doc_ids
        if corpus is not None:
            missing = [d for d in ids if d not in corpus]
            if missing:
                raise DataError(f"query {qid!r}: {len(missing)} ranked docs missing from corpus, e.g. {missing[0]!r}")
            docs[qid] = {d: corpus[d] for d in ids}
        else:
            docs[qid] = {d: Document(d) for d in ids}
    if spec.mode == SIMULATE and qrels is not None:
        unjudged = [q.query_id for q in queries if q.query_id not in qrels]
        if unjudged:
            log.warning("%d queries have no judgments; every document counts as grade 0", len(unjudged))
    return World(queries, initial, docs, qrels)


def make_oracle(spec: RunSpec, world: World, seed: int) -> Oracle:
    """A fresh oracle, so every (method, repetition) starts its own random streams."""
    if spec.mode == LIVE:
        assert spec.endpoint is not None
        return EndpointOracle(spec.endpoint)
    if world.qrels is None:
        raise ConfigError("simulate mode needs relevance grades")
    if spec.noise is None:
        return PerfectOracle(world.qrels)
    return SimulatedOracle(world.qrels, spec.noise, seed=seed)


def run_method(
    config: AlgorithmConfig,
    world: World,
    oracle: Oracle,
    workers: int = 1,
) -> dict[str, RerankOutcome]:
    """Rerank every query; outcomes come back ordered by query id.

    The first failure cancels the remaining queries and is re-raised.
    """

    def one(q: Query) -> tuple[str, RerankOutcome]:
        return q.query_id, rerank(q, world.first_stage(q.query_id), config, oracle)

    queries = sorted(world.queries, key=lambda q: q.query_id)
    if workers <= 1:
        results = dict(one(q) for q in queries)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, q) for q in queries]
            try:
                results = dict(f.result() for f in futures)
            except BaseException:
                for f in futures:
                    f.cancel()
                raise
    return {qid: results[qid] for qid in sorted(results)}


def _timed(label: str, fn: Callable[[], dict[str, RerankOutcome]]) -> dict[str, RerankOutcome]:
    t0 = time.perf_counter()
    out = fn()
    log.info("%s: %d queries in %.2fs wall", label, len(out), time.perf_counter() - t0)
    return out


def unique_labels(methods: Sequence[AlgorithmConfig]) -> list[str]:
    """Method labels with ``#2``, ``#3`` ... appended to repeats."""
    seen: dict[str, int] = {}
    out = []
    for m in methods:
        n = seen.get(m.label, 0) + 1
        seen[m.label] = n
        out.append(m.label if n == 1 else f"{m.label}#{n}")
    return out


def _wall_ms(spec: RunSpec, outcome: RerankOutcome) -> float:
    if spec.mode == SIMULATE:
        return spec.latency.ms(outcome.ledger)
    return outcome.ledger.wall_ms


def ledger_rows(spec: RunSpec, label: str, outcomes: Mapping[str, RerankOutcome]) -> list[tuple[str, ...]]:
    rows = []
    for qid, o in outcomes.items():
        L = o.ledger
        rows.append((
            qid, label, str(L.calls_select_best), str(L.calls_rank_set), str(L.calls_score),
            str(L.total_docs_in_calls), str(L.prompt_tokens), str(L.output_tokens),
            str(o.promotions), fmt(_wall_ms(spec, o)),
        ))
    return rows


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_rerank(spec: RunSpec) -> dict[str, Path]:
    """Rerank with every configured method; one run file and one ledger CSV each."""
    spec.validate()
    world = load_world(spec)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for config, label in zip(spec.methods, unique_labels(spec.methods)):
        oracle = make_oracle(spec, world, config.rng_seed)
        outcomes = _timed(label, lambda: run_method(config, world, oracle, spec.pool_size()))
        run_path = out / f"{label}.run"
        ledger_path = out / f"{label}.ledger.csv"
        write_run(run_path, [o.ranking for o in outcomes.values()], tag=label)
        write_csv(ledger_path, LEDGER_HEADER, ledger_rows(spec, label, outcomes))
        written[f"{label}.run"] = run_path
        written[f"{label}.ledger"] = ledger_path
    return written


@dataclass
class BenchResult:
    labels: list[str]
    per_query: dict[str, list[dict[str, dict[str, float]]]]  # label -> rep -> qid -> metric -> value
    table: dict[str, dict[str, tuple[float, float]]]  # label -> metric -> (mean, ci)
    reports: dict[str, MetricReport]
    headline: dict[str, float]
    reps: int

    @property
    def zero_width(self) -> bool:
        return self.reps < 2


def bench_metrics(spec: RunSpec) -> tuple[str, str, str]:
    return (f"ndcg@{spec.eval_k}", "inferences", "time_ms")


def run_bench(spec: RunSpec) -> BenchResult:
    spec.validate()
    if len(spec.methods) < 2:
        raise ConfigError("bench needs at least two methods")
    world = load_world(spec)
    if world.qrels is None:
        raise ConfigError("bench needs qrels to score NDCG")
    ndcg_name, calls_name, time_name = bench_metrics(spec)
    labels = unique_labels(spec.methods)
    per_query: dict[str, list[dict[str, dict[str, float]]]] = {}
    for config, label in zip(spec.methods, labels):
        per_rep = []
        for rep in range(spec.reps):
            oracle = make_oracle(spec, world, config.rng_seed + rep)
            outcomes = _timed(f"{label} rep {rep}", lambda: run_method(config, world, oracle, spec.pool_size()))
            per_rep.append({
                qid: {
                    ndcg_name: ndcg_at_k(o.ranking, world.qrels, spec.eval_k),
                    calls_name: float(o.ledger.total_calls),
                    time_name: _wall_ms(spec, o),
                }
                for qid, o in outcomes.items()
            })
        per_query[label] = per_rep

    table: dict[str, dict[str, tuple[float, float]]] = {}
    reports: dict[str, MetricReport] = {}
    for config, label in zip(spec.methods, labels):
        reps = per_query[label]
        table[label] = {}
        for metric in (ndcg_name, calls_name, time_name):
            rep_means = [math.fsum(r[q][metric] for q in r) / len(r) for r in reps]
            table[label][metric] = mean_ci(rep_means)
        reports[label] = aggregate(reps, label, fingerprint(config.to_dict()))
    return BenchResult(labels, per_query, table, reports, headline_ratios(spec, labels, table), spec.reps)


def headline_ratios(
    spec: RunSpec, labels: Sequence[str], table: Mapping[str, Mapping[str, tuple[float, float]]]
) -> dict[str, float]:
    """Insertion-versus-heapsort comparison, using the first of each in the list."""
    ndcg_name, calls_name, time_name = bench_metrics(spec)
    ins = next((lb for m, lb in zip(spec.methods, labels) if m.method == "setwise_insertion"), None)
    heap = next((lb for m, lb in zip(spec.methods, labels) if m.method == "setwise_heapsort"), None)
    if ins is None or heap is None:
        return {}
    out = {
        "insertion_over_heapsort_calls": table[ins][calls_name][0] / table[heap][calls_name][0],
        "ndcg_delta": table[ins][ndcg_name][0] - table[heap][ndcg_name][0],
        "time_delta_ms": table[ins][time_name][0] - table[heap][time_name][0],
    }
    out["call_reduction"] = 1.0 - out["insertion_over_heapsort_calls"]
    return out


def format_bench_text(result: BenchResult, spec: RunSpec) -> str:
    ndcg_name, calls_name, time_name = bench_metrics(spec)
    flag = " (1 rep: CI not estimable)" if result.zero_width else ""
    head = ["method", ndcg_name, "#inferences", "time (ms)"]
    rows = []
    for label in result.labels:
        t = result.table[label]
        rows.append([
            label,
            f"{t[ndcg_name][0]:.4f} ± {t[ndcg_name][1]:.4f}",
            f"{t[calls_name][0]:.2f} ± {t[calls_name][1]:.2f}",
            f"{t[time_name][0]:.1f} ± {t[time_name][1]:.1f}",
        ])
    widths = [max(len(r[i]) for r in [head, *rows]) for i in range(len(head))]
    lines = [f"mean ± 95% CI over {result.reps} repetition(s){flag}"]
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    if result.headline:
        h = result.headline
        lines.append("")
        lines.append(
            f"insertion vs heapsort: calls x{h['insertion_over_heapsort_calls']:.3f} "
            f"({100 * h['call_reduction']:.1f}% fewer), NDCG delta {h['ndcg_delta']:+.4f}"
        )
    if spec.mode == SIMULATE:
        lines.append("time column: modeled latency from the cost ledger, not measured")
    return "\n".join(lines) + "\n"


def cmd_bench(spec: RunSpec) -> dict[str, Path]:
    """Run the method matrix and write the comparison table with its inputs.

    Nothing is written unless every method finished.
    """
    result = run_bench(spec)
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bench_rows = []
    flag = "single_rep" if result.zero_width else ""
    for label in result.labels:
        for metric, (mean, ci) in result.table[label].items():
            bench_rows.append((label, metric, fmt(mean), fmt(ci), str(result.reps), flag))
    per_query_rows = [
        (label, str(rep), qid, metric, fmt(value))
        for label in result.labels
        for rep, values in enumerate(result.per_query[label])
        for qid in sorted(values)
        for metric, value in values[qid].items()
    ]
    paths = {
        "bench.csv": out / "bench.csv",
        "bench.txt": out / "bench.txt",
        "per_query.csv": out / "per_query.csv",
        "metrics.csv": out / "metrics.csv",
        "headline.csv": out / "headline.csv",
    }
    write_csv(paths["bench.csv"], BENCH_HEADER, bench_rows)
    write_csv(paths["per_query.csv"], PER_QUERY_HEADER, per_query_rows)
    write_metric_csv(paths["metrics.csv"], [result.reports[lb] for lb in result.labels])
    write_csv(paths["headline.csv"], ("name", "value"), [(k, fmt(v)) for k, v in sorted(result.headline.items())])
    with atomic_write(paths["bench.txt"]) as fh:
        fh.write(format_bench_text(result, spec))
    return paths


def cmd_eval(run_path: str, qrels_path: str, k: int, out_path: str | None, method: str = "run") -> MetricReport:
    report = evaluate_run(read_run(run_path), read_qrels(qrels_path), k, method)
    if out_path:
        write_metric_csv(out_path, [report])
    return report
