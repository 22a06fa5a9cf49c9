"""Comparison oracles.

An oracle answers three kinds of request about a query and a few documents:
``select_best`` (index of the most relevant), ``rank_set`` (full ordering,
optionally with logit-like weights) and ``score_one`` (a relevance score for a
single document).  Ranking algorithms only ever talk to this interface.

:class:`SimulatedOracle` stands in for an LLM.  Without a noise model it is
a perfect judge over known relevance values; with one it draws answers from a
Plackett-Luce model over ``exp(relevance / temperature)`` and can be biased
toward the first presented document when its own confidence is low.
"""

from __future__ import annotations

import hashlib
import math
import random
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from .core import CostLedger, Document, Qrels, Query
from .errors import OracleError, UnsupportedCapability
from .prompts import prompt_overhead, template_for

SELECT_BEST = "select_best"
RANK_SET = "rank_set"
SCORE_ONE = "score_one"
KINDS = (SELECT_BEST, RANK_SET, SCORE_ONE)


@dataclass(frozen=True, slots=True)
class OracleRequest:
    query: Query
    docs: tuple[Document, ...]
    kind: str
    prior_ordered: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "docs", tuple(self.docs))
        if self.kind not in KINDS:
            raise OracleError(f"unknown request kind {self.kind!r}")
        n = len(self.docs)
        if self.kind == SCORE_ONE and n != 1:
            raise OracleError("score_one takes exactly one document")
        if self.kind != SCORE_ONE and n < 2:
            raise OracleError(f"{self.kind} needs at least two documents")

    @property
    def arity(self) -> int:
        return len(self.docs)


class OracleVerdict(NamedTuple):
    """One oracle answer.  Which fields are set depends on the request kind."""

    winner: int | None = None
    ordering: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    score: float | None = None
    output_token_cost: int = 0

    def check(self, arity: int) -> OracleVerdict:
        """Raise ``OracleError`` unless the verdict is internally consistent."""
        if self.ordering is not None:
            if sorted(self.ordering) != list(range(arity)):
                raise OracleError(f"ordering {self.ordering} is not a permutation of {arity}")
            if self.winner is not None and self.winner != self.ordering[0]:
                raise OracleError("winner disagrees with ordering[0]")
        if self.winner is not None and not 0 <= self.winner < arity:
            raise OracleError(f"winner {self.winner} out of range for arity {arity}")
        if self.weights is not None:
            if len(self.weights) != arity or not all(math.isfinite(w) for w in self.weights):
                raise OracleError("weights must be finite and aligned with docs")
            if self.ordering is not None:
                ws = [self.weights[i] for i in self.ordering]
                if any(a < b for a, b in zip(ws, ws[1:])):
                    raise OracleError("weights are not consistent with ordering")
        if self.score is not None and not math.isfinite(self.score):
            raise OracleError("score is not finite")
        if self.output_token_cost < 0:
            raise OracleError("negative output token cost")
        return self


@dataclass(frozen=True, slots=True)
class NoiseModel:
    temperature: float = 1.0
    uncertainty_threshold: float = 0.6
    flip_to_prior_prob: float = 0.8

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.uncertainty_threshold <= 1.0:
            raise ValueError("uncertainty_threshold must be in [0, 1]")
        if not 0.0 <= self.flip_to_prior_prob <= 1.0:
            raise ValueError("flip_to_prior_prob must be in [0, 1]")


class Oracle(ABC):
    """Anything that can judge relevance of documents to a query."""

    capabilities: frozenset[str] = frozenset()
    provides_weights: bool = False

    def supports(self, kind: str) -> bool:
        return kind in self.capabilities

    def require(self, kind: str) -> None:
        if kind not in self.capabilities:
            raise UnsupportedCapability(kind)

    @abstractmethod
    def invoke(self, req: OracleRequest) -> OracleVerdict:
        ...

    def select_best(self, query: Query, docs: Sequence[Document], prior_ordered: bool = False) -> tuple[int, int]:
        """``(winner, output_token_cost)`` for a select_best request.

        Subclasses may override this with a cheaper path; the answer must be
        the one :meth:`invoke` would give.
        """
        v = self.invoke(OracleRequest(query, tuple(docs), SELECT_BEST, prior_ordered))
        if v.winner is None:
            raise OracleError("select_best verdict has no winner")
        v.check(len(docs))
        return v.winner, v.output_token_cost

    def rank_set(self, query: Query, docs: Sequence[Document], prior_ordered: bool = False) -> OracleVerdict:
        """Checked verdict for a rank_set request; same override rule as :meth:`select_best`."""
        v = self.invoke(OracleRequest(query, tuple(docs), RANK_SET, prior_ordered))
        if v.ordering is None:
            raise OracleError("rank_set verdict has no ordering")
        return v.check(len(docs))


def _softmax(logits: Sequence[float]) -> list[float]:
    m = max(logits)
    e = [math.exp(x - m) for x in logits]
    s = sum(e)
    return [x / s for x in e]


def _gumbel(rng: random.Random) -> float:
    u = rng.random()
    while u <= 0.0:
        u = rng.random()
    return -math.log(-math.log(u))


def _stable_desc(values: Sequence[float]) -> list[int]:
    # reverse=True keeps equal values in presentation order
    return sorted(range(len(values)), key=values.__getitem__, reverse=True)


def simulated_select(
    grades: Sequence[float],
    noise: NoiseModel | None,
    prior_ordered: bool,
    rng: random.Random,
) -> OracleVerdict:
    """One select_best answer over documents with true relevance ``grades``.

    With ``noise=None`` the first maximal grade wins.  Otherwise the winner
    is drawn with probabilities ``softmax(grades / temperature)``; when the
    largest of those probabilities is below the uncertainty threshold and the
    documents are prior-ordered, the answer snaps to index 0 with probability
    ``flip_to_prior_prob``.  ``weights`` are the choice probabilities.
    """
    if noise is None:
        best = max(range(len(grades)), key=lambda i: (grades[i], -i))
        return OracleVerdict(winner=best, weights=tuple(float(g) for g in grades), output_token_cost=1)
    probs = _softmax([g / noise.temperature for g in grades])
    u = rng.random()
    winner, acc = len(probs) - 1, 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            winner = i
            break
    if prior_ordered and max(probs) < noise.uncertainty_threshold:
        if rng.random() < noise.flip_to_prior_prob:
            winner = 0
    return OracleVerdict(winner=winner, weights=tuple(probs), output_token_cost=1)


def simulated_rank(
    grades: Sequence[float],
    noise: NoiseModel | None,
    prior_ordered: bool,
    rng: random.Random,
) -> OracleVerdict:
    """A full ordering drawn from the Plackett-Luce model via Gumbel perturbation.

    Weights are the softmax of the perturbed utilities, so they sort the same
    way as the ordering (the analogue of reading per-label logits).
    """
    n = len(grades)
    if noise is None:
        order = _stable_desc(grades)
        return OracleVerdict(winner=order[0], ordering=tuple(order), weights=tuple(grades), output_token_cost=n)
    utils = [g / noise.temperature + _gumbel(rng) for g in grades]
    weights = _softmax(utils)
    # order by the utilities: at low temperature the softmax underflows to ties
    order = _stable_desc(utils)
    probs = _softmax([g / noise.temperature for g in grades])
    if prior_ordered and order[0] != 0 and max(probs) < noise.uncertainty_threshold:
        if rng.random() < noise.flip_to_prior_prob:
            ranked = sorted(weights, reverse=True)
            order = [0] + [i for i in order if i != 0]
            reassigned = [0.0] * n
            for slot, i in enumerate(order):
                reassigned[i] = ranked[slot]
            weights = reassigned
    return OracleVerdict(winner=order[0], ordering=tuple(order), weights=tuple(weights), output_token_cost=n)


def query_seed(seed: int, query_id: str) -> int:
    """Stable per-query substream seed derived from ``(seed, query_id)``."""
    h = hashlib.blake2b(f"{seed}\x1f{query_id}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big")


class SimulatedOracle(Oracle):
    """LLM stand-in judging documents by known relevance.

    ``relevance`` maps ``query_id -> doc_id -> value`` (a :class:`Qrels` works);
    missing pairs count as 0.  Every query draws from its own random stream,
    so results do not depend on the order queries are processed in.
    """

    capabilities = frozenset(KINDS)
    provides_weights = True

    def __init__(
        self,
        relevance: Qrels | Mapping[str, Mapping[str, float]],
        noise: NoiseModel | None = None,
        seed: int = 0,
    ):
        rel = relevance.to_dict() if isinstance(relevance, Qrels) else relevance
        self._rel = {qid: {did: float(v) for did, v in row.items()} for qid, row in rel.items()}
        self.noise = noise
        self.seed = seed
        self._streams: dict[str, random.Random] = {}
        self._lock = threading.Lock()

    def _rng(self, query_id: str) -> random.Random:
        with self._lock:
            rng = self._streams.get(query_id)
            if rng is None:
                rng = self._streams[query_id] = random.Random(query_seed(self.seed, query_id))
            return rng

    def relevance(self, query_id: str, doc_id: str) -> float:
        return self._rel.get(query_id, {}).get(doc_id, 0.0)

    def select_best(self, query: Query, docs: Sequence[Document], prior_ordered: bool = False) -> tuple[int, int]:
        if len(docs) < 2:
            raise OracleError("select_best needs at least two documents")
        row = self._rel.get(query.query_id, {})
        grades = [row.get(d.doc_id, 0.0) for d in docs]
        if self.noise is None:
            # index() finds the first maximum, so ties go to the earlier document
            return grades.index(max(grades)), 1
        v = simulated_select(grades, self.noise, prior_ordered, self._rng(query.query_id))
        return v.winner, v.output_token_cost

    def rank_set(self, query: Query, docs: Sequence[Document], prior_ordered: bool = False) -> OracleVerdict:
        if len(docs) < 2:
            raise OracleError("rank_set needs at least two documents")
        row = self._rel.get(query.query_id, {})
        grades = [row.get(d.doc_id, 0.0) for d in docs]
        if self.noise is None:
            order = tuple(_stable_desc(grades))
            return OracleVerdict(order[0], order, tuple(grades), None, len(docs))
        return simulated_rank(grades, self.noise, prior_ordered, self._rng(query.query_id))

    def invoke(self, req: OracleRequest) -> OracleVerdict:
        self.require(req.kind)
        qid = req.query.query_id
        row = self._rel.get(qid, {})
        grades = [row.get(d.doc_id, 0.0) for d in req.docs]
        rng = self._rng(qid)
        if req.kind == SELECT_BEST:
            return simulated_select(grades, self.noise, req.prior_ordered, rng)
        if req.kind == RANK_SET:
            return simulated_rank(grades, self.noise, req.prior_ordered, rng)
        score = grades[0]
        if self.noise is not None:
            score += self.noise.temperature * _gumbel(rng)
        return OracleVerdict(score=score, output_token_cost=0)


class PerfectOracle(SimulatedOracle):
    """Noise-free judge; ties go to the earlier-presented document."""

    def __init__(self, relevance: Qrels | Mapping[str, Mapping[str, float]]):
        super().__init__(relevance, noise=None)


class RecordingOracle(Oracle):
    """Forwards every request and keeps a running :class:`CostLedger`.

    A call is counted before it is forwarded, so failing calls still count.
    Prompt tokens are template overhead plus query and document token
    estimates; output tokens come from the verdict.  Calls are tallied by
    shape ``(kind, arity, prior_ordered)`` and the template overhead is
    applied once per shape when the ledger is built.
    """

    def __init__(self, inner: Oracle, pointwise_template: str = "pointwise_yesno"):
        self.inner = inner
        self.capabilities = inner.capabilities
        self.provides_weights = inner.provides_weights
        self.pointwise_template = pointwise_template
        self.calls = 0
        self._shapes: dict[tuple[str, int, bool], int] = {}
        self._content_tokens = 0
        self._output = 0
        self.wall_us = 0
        self._last_query: Query | None = None
        self._last_query_tokens = 0

    def _record(self, kind: str, query: Query, docs: Sequence[Document], prior_ordered: bool) -> None:
        self.calls += 1
        key = (kind, len(docs), prior_ordered)
        self._shapes[key] = self._shapes.get(key, 0) + 1
        if query is not self._last_query:
            self._last_query = query
            self._last_query_tokens = query.token_estimate
        self._content_tokens += self._last_query_tokens + sum([d.token_estimate for d in docs])

    def invoke(self, req: OracleRequest) -> OracleVerdict:
        self._record(req.kind, req.query, req.docs, req.prior_ordered)
        verdict = self.inner.invoke(req)
        self._output += verdict.output_token_cost
        return verdict

    def select_best(self, query: Query, docs: Sequence[Document], prior_ordered: bool = False) -> tuple[int, int]:
        if len(docs) < 2:
            raise OracleError("select_best needs at least two documents")
        self._record(SELECT_BEST, query, docs, prior_ordered)
        winner, cost = self.inner.select_best(query, docs, prior_ordered)
        self._output += cost
        return winner, cost

    def rank_set(self, query: Query, docs: Sequence[Document], prior_ordered: bool = False) -> OracleVerdict:
        if len(docs) < 2:
            raise OracleError("rank_set needs at least two documents")
        self._record(RANK_SET, query, docs, prior_ordered)
        verdict = self.inner.rank_set(query, docs, prior_ordered)
        self._output += verdict.output_token_cost
        return verdict

    def ledger(self) -> CostLedger:
        counts = {SELECT_BEST: 0, RANK_SET: 0, SCORE_ONE: 0}
        docs = overhead = 0
        for (kind, arity, prior), n in self._shapes.items():
            counts[kind] += n
            docs += n * arity
            tmpl = template_for(kind, arity, prior, self.pointwise_template)
            overhead += n * prompt_overhead(tmpl.name, arity)
        return CostLedger(
            calls_select_best=counts[SELECT_BEST],
            calls_rank_set=counts[RANK_SET],
            calls_score=counts[SCORE_ONE],
            total_docs_in_calls=docs,
            prompt_tokens=overhead + self._content_tokens,
            output_tokens=self._output,
            wall_us=self.wall_us,
        )


def recording_wrap(inner: Oracle) -> RecordingOracle:
    return RecordingOracle(inner)
