"""Synthetic retrieval worlds with a tunable first-stage quality.

Each query gets ``n_docs`` documents with grades drawn from
``relevant_fraction``.  The first-stage score of a document is its grade plus
Gaussian noise of scale ``initial_noise``; sorting by that score gives the
initial ranking.  ``initial_noise = 0`` reproduces the grade order exactly,
and large values approach a random permutation.

The standard normal draws are fixed per ``(rng_seed, query index)`` and
only scaled by ``initial_noise``, so worlds that differ only in the noise
level share their grades and their noise directions.  That keeps the
agreement with truth a smooth, nearly monotone function of the noise level,
which :func:`tau_target_calibrate` relies on.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import Document, Qrels, Query, Ranking
from .errors import ConfigError, NoConvergence
from .eval import grade_tau
from .trec import write_corpus, write_qrels, write_queries, write_run

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.6, 0.2, 0.12, 0.08)
SCORE_DECIMALS = 6


@dataclass(frozen=True)
class SynthConfig:
    n_queries: int = 50
    n_docs: int = 100
    grade_levels: int = 4
    relevant_fraction: tuple[float, ...] = DEFAULT_FRACTIONS
    initial_noise: float = 1.0
    rng_seed: int = 0
    doc_tokens: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "relevant_fraction", tuple(float(p) for p in self.relevant_fraction))
        if self.n_queries < 1 or self.n_docs < 1:
            raise ConfigError("n_queries and n_docs must be positive")
        if self.grade_levels < 1 or len(self.relevant_fraction) != self.grade_levels:
            raise ConfigError(
                f"relevant_fraction needs {self.grade_levels} entries, got {len(self.relevant_fraction)}"
            )
        if any(not 0.0 <= p <= 1.0 for p in self.relevant_fraction):
            raise ConfigError("relevant_fraction entries must lie in [0, 1]")
        if abs(math.fsum(self.relevant_fraction) - 1.0) > 1e-9:
            raise ConfigError("relevant_fraction must sum to 1")
        if not (self.initial_noise >= 0.0 and math.isfinite(self.initial_noise)):
            raise ConfigError("initial_noise must be a finite non-negative number")
        if self.doc_tokens < 0:
            raise ConfigError("doc_tokens must be non-negative")

    def with_noise(self, sigma: float) -> SynthConfig:
        return replace(self, initial_noise=sigma)

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "n_docs": self.n_docs,
            "grade_levels": self.grade_levels,
            "relevant_fraction": list(self.relevant_fraction),
            "initial_noise": self.initial_noise,
            "rng_seed": self.rng_seed,
            "doc_tokens": self.doc_tokens,
        }


@dataclass(frozen=True)
class SynthWorld:
    config: SynthConfig
    queries: list[Query]
    docs: dict[str, list[Document]]
    initial: dict[str, Ranking]
    qrels: Qrels
    docs_by_id: dict[str, dict[str, Document]] = field(repr=False, default_factory=dict)

    def first_stage_docs(self, query_id: str) -> list[Document]:
        """Documents of ``query_id`` in initial-ranking order."""
        by_id = self.docs_by_id[query_id]
        return [by_id[d] for d in self.initial[query_id].doc_ids]

    def tau(self, query_id: str) -> float:
        return grade_tau(self.initial[query_id].doc_ids, self.qrels.judged(query_id))

    def mean_tau(self) -> float:
        return math.fsum(self.tau(q.query_id) for q in self.queries) / len(self.queries)


def _width(n: int) -> int:
    return max(1, len(str(n - 1)))


def _draw(seed: int, index: int, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, index])
    grades = rng.choice(cfg.grade_levels, size=cfg.n_docs, p=np.asarray(cfg.relevant_fraction))
    z = rng.standard_normal(cfg.n_docs)
    return grades, z


def _placeholder(doc_id: str, n_tokens: int) -> str:
    return " ".join(f"{doc_id}w{i}" for i in range(n_tokens))


def generate(cfg: SynthConfig) -> SynthWorld:
    qw, dw = _width(cfg.n_queries), _width(cfg.n_docs)
    queries: list[Query] = []
    docs: dict[str, list[Document]] = {}
    initial: dict[str, Ranking] = {}
    judged: dict[str, dict[str, int]] = {}
    for qi in range(cfg.n_queries):
        qid = f"q{qi:0{qw}d}"
        grades, z = _draw(cfg.rng_seed, qi, cfg)
        scores = np.round(grades + cfg.initial_noise * z, SCORE_DECIMALS)
        ids = [f"{qid}-d{j:0{dw}d}" for j in range(cfg.n_docs)]
        queries.append(Query(qid, f"synthetic query {qid}"))
        docs[qid] = [Document(d, _placeholder(d, cfg.doc_tokens)) for d in ids]
        initial[qid] = Ranking.from_scores(qid, zip(ids, scores.tolist()))
        judged[qid] = {d: int(g) for d, g in zip(ids, grades.tolist())}
    by_id = {q: {d.doc_id: d for d in ds} for q, ds in docs.items()}
    return SynthWorld(cfg, queries, docs, initial, Qrels(judged), by_id)


def measured_tau(cfg: SynthConfig) -> float:
    return generate(cfg).mean_tau()


def tau_target_calibrate(
    target: float,
    cfg: SynthConfig,
    n_queries: int = 50,
    tolerance: float = 0.03,
    max_steps: int = 40,
) -> float:
    """Noise level whose mean agreement with truth is within ``tolerance`` of ``target``.

    Bisection on ``initial_noise`` over ``n_queries`` generated queries.  A
    target of 1 or more returns 0 (the grade order itself).
    """
    if target >= 1.0:
        return 0.0
    probe = replace(cfg, n_queries=n_queries)
    lo, hi = 0.0, 1.0
    # grow the bracket until the noisy end falls below the target
    while measured_tau(probe.with_noise(hi)) > target:
        hi *= 2.0
        if hi > 1e6:
            raise NoConvergence(f"agreement never drops to {target}")
    for step in range(max_steps):
        mid = (lo + hi) / 2.0
        tau = measured_tau(probe.with_noise(mid))
        log.debug("calibrate step %d: sigma=%.6f tau=%.4f", step, mid, tau)
        if abs(tau - target) <= tolerance:
            return mid
        if tau > target:
            lo = mid
        else:
            hi = mid
    raise NoConvergence(f"no noise level within {tolerance} of {target} after {max_steps} steps")


def write_world(world: SynthWorld, out_dir: str | os.PathLike[str], tag: str = "synth") -> dict[str, Path]:
    """Write run, qrels, corpus and topics files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "run": out / "initial.run",
        "qrels": out / "qrels.txt",
        "corpus": out / "corpus.jsonl",
        "queries": out / "queries.tsv",
    }
    write_run(paths["run"], [world.initial[q.query_id] for q in world.queries], tag)
    write_qrels(paths["qrels"], world.qrels)
    write_corpus(paths["corpus"], [d for q in world.queries for d in world.docs[q.query_id]])
    write_queries(paths["queries"], {q.query_id: q.text for q in world.queries})
    return paths
