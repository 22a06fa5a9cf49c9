"""Reranking strategies over a comparison oracle.

Every public function takes the query, the candidate documents in
first-stage order, ``k`` and an oracle, and returns a :class:`RerankOutcome`
whose ranking holds the top ``min(k, n)`` documents scored ``m, m-1, ..., 1``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..core import AlgorithmConfig, CostLedger, Document, Query, Ranking, order_by_ranking, unique_ids
from ..errors import UnsupportedCapability
from ..oracle import RANK_SET, SCORE_ONE, SELECT_BEST, Oracle
from ._judge import Judge
from .baselines import allpair_top_k, listwise_top_k, pointwise_top_k
from .bubble import bubble_top_k
from .heap import best_of, heap_top_k
from .insertion import MAX_COMPARE, SORT_COMPARE, insertion_top_k

__all__ = [
    "RerankOutcome",
    "listwise_rerank",
    "pairwise_allpair",
    "pairwise_bubblesort",
    "pairwise_heapsort",
    "pointwise_rerank",
    "rerank",
    "rerank_ranking",
    "setwise_bubblesort",
    "setwise_heapsort",
    "setwise_insertion",
    "best_of",
    "heap_top_k",
]


@dataclass(frozen=True)
class RerankOutcome:
    ranking: Ranking
    ledger: CostLedger
    promotions: int = 0
    phases: dict[str, int] = field(default_factory=dict)

    @property
    def doc_ids(self) -> list[str]:
        return self.ranking.doc_ids


def _finish(query: Query, top: Sequence[Document], judge: Judge, t0: int, **extra) -> RerankOutcome:
    m = len(top)
    ranking = Ranking(query.query_id, tuple((d.doc_id, float(m - i)) for i, d in enumerate(top)))
    judge.recorder.wall_us += (time.perf_counter_ns() - t0) // 1000
    return RerankOutcome(ranking, judge.recorder.ledger(), **extra)


def _start(query: Query, docs: Sequence[Document], oracle: Oracle, kind: str, use_prior: bool):
    unique_ids(docs)
    oracle.require(kind)
    # docs arrive in first-stage order, which is the prior
    rank = {d.doc_id: i for i, d in enumerate(docs)} if use_prior else None
    return Judge(query, oracle, use_prior, rank), time.perf_counter_ns()


def pointwise_rerank(query: Query, docs: Sequence[Document], k: int, oracle: Oracle) -> RerankOutcome:
    judge, t0 = _start(query, docs, oracle, SCORE_ONE, False)
    return _finish(query, pointwise_top_k(judge, docs, k), judge, t0)


def pairwise_allpair(
    query: Query, docs: Sequence[Document], k: int, oracle: Oracle, use_prior: bool = False
) -> RerankOutcome:
    judge, t0 = _start(query, docs, oracle, SELECT_BEST, use_prior)
    top, _ = allpair_top_k(judge, docs, k)
    return _finish(query, top, judge, t0)


def setwise_heapsort(
    query: Query, docs: Sequence[Document], k: int, oracle: Oracle, set_size: int = 3, use_prior: bool = False
) -> RerankOutcome:
    judge, t0 = _start(query, docs, oracle, SELECT_BEST, use_prior)
    return _finish(query, heap_top_k(judge, docs, k, set_size), judge, t0)


def pairwise_heapsort(
    query: Query, docs: Sequence[Document], k: int, oracle: Oracle, use_prior: bool = False
) -> RerankOutcome:
    return setwise_heapsort(query, docs, k, oracle, set_size=2, use_prior=use_prior)


def setwise_bubblesort(
    query: Query,
    docs: Sequence[Document],
    k: int,
    oracle: Oracle,
    set_size: int = 3,
    use_prior: bool = False,
    early_exit: bool = True,
) -> RerankOutcome:
    judge, t0 = _start(query, docs, oracle, SELECT_BEST, use_prior)
    return _finish(query, bubble_top_k(judge, docs, k, set_size, early_exit), judge, t0)


def pairwise_bubblesort(
    query: Query,
    docs: Sequence[Document],
    k: int,
    oracle: Oracle,
    use_prior: bool = False,
    early_exit: bool = True,
) -> RerankOutcome:
    return setwise_bubblesort(query, docs, k, oracle, 2, use_prior, early_exit)


def listwise_rerank(
    query: Query,
    docs: Sequence[Document],
    k: int,
    oracle: Oracle,
    window: int = 4,
    step: int = 2,
    passes: int = 5,
    use_prior: bool = False,
) -> RerankOutcome:
    judge, t0 = _start(query, docs, oracle, RANK_SET, use_prior)
    return _finish(query, listwise_top_k(judge, docs, k, window, step, passes), judge, t0)


def setwise_insertion(
    query: Query,
    docs: Sequence[Document],
    k: int,
    oracle: Oracle,
    set_size: int = 3,
    compare_mode: str = MAX_COMPARE,
    use_prior: bool = False,
) -> RerankOutcome:
    """``docs`` must follow the first-stage ranking (see :func:`rerank_ranking`)."""
    if compare_mode == SORT_COMPARE:
        if not (oracle.supports(RANK_SET) and oracle.provides_weights):
            raise UnsupportedCapability(RANK_SET, "sort_compare needs an ordering with weights")
        kind = RANK_SET
    else:
        kind = SELECT_BEST
    judge, t0 = _start(query, docs, oracle, kind, use_prior)
    top, promotions, phases = insertion_top_k(judge, docs, k, set_size, compare_mode)
    return _finish(query, top, judge, t0, promotions=promotions, phases=phases)


def rerank(query: Query, docs: Sequence[Document], config: AlgorithmConfig, oracle: Oracle) -> RerankOutcome:
    """Run the method named in ``config`` on ``docs`` (first-stage order)."""
    m, k = config.method, config.k
    runners: dict[str, Callable[[], RerankOutcome]] = {
        "pointwise_score": lambda: pointwise_rerank(query, docs, k, oracle),
        "pairwise_allpair": lambda: pairwise_allpair(query, docs, k, oracle, config.use_prior),
        "pairwise_heapsort": lambda: pairwise_heapsort(query, docs, k, oracle, config.use_prior),
        "pairwise_bubblesort": lambda: pairwise_bubblesort(
            query, docs, k, oracle, config.use_prior, config.early_exit
        ),
        "listwise_window": lambda: listwise_rerank(
            query, docs, k, oracle, config.window, config.step, config.passes, config.use_prior
        ),
        "setwise_heapsort": lambda: setwise_heapsort(query, docs, k, oracle, config.set_size, config.use_prior),
        "setwise_bubblesort": lambda: setwise_bubblesort(
            query, docs, k, oracle, config.set_size, config.use_prior, config.early_exit
        ),
        "setwise_insertion": lambda: setwise_insertion(
            query, docs, k, oracle, config.set_size, config.compare_mode, config.use_prior
        ),
    }
    return runners[m]()


def rerank_ranking(
    query: Query,
    initial: Ranking,
    docs: dict[str, Document],
    config: AlgorithmConfig,
    oracle: Oracle,
) -> RerankOutcome:
    """Order ``docs`` by the first-stage ``initial`` ranking, then :func:`rerank`."""
    return rerank(query, order_by_ranking(initial, docs), config, oracle)
