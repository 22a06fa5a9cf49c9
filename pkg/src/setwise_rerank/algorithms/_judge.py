from __future__ import annotations

from typing import Mapping, Sequence

from ..core import Document, Query
from ..errors import OracleError
from ..oracle import SCORE_ONE, Oracle, OracleRequest, OracleVerdict, RecordingOracle


class Judge:
    """Per-run view of an oracle: fixed query, prior handling, cost recording.

    With ``use_prior`` a request is only marked ``prior_ordered`` when its
    first document really carries the prior:

    * :meth:`best` / :meth:`order` present the documents sorted by
      first-stage rank (``prior_rank``) and map the answer back, so callers
      keep their own layout;
    * :meth:`best_led` / :meth:`order_led` keep the caller's layout and
      treat ``docs[0]`` as the incumbent the prior protects;
    * :meth:`best_plain` / :meth:`order_plain` never ask for the bias.
    """

    def __init__(
        self,
        query: Query,
        oracle: Oracle,
        use_prior: bool = False,
        prior_rank: Mapping[str, int] | None = None,
    ):
        self.query = query
        self.recorder = oracle if isinstance(oracle, RecordingOracle) else RecordingOracle(oracle)
        self.use_prior = use_prior
        self.prior_rank = dict(prior_rank or {})
        # bound once: these run once per oracle call
        self._select = self.recorder.select_best
        self._rank = self.recorder.rank_set

    @property
    def calls(self) -> int:
        return self.recorder.calls

    def _prior_layout(self, docs: Sequence[Document]) -> list[int]:
        unseen = len(self.prior_rank)
        return sorted(range(len(docs)), key=lambda i: self.prior_rank.get(docs[i].doc_id, unseen))

    def _winner(self, docs: Sequence[Document], prior: bool) -> int:
        winner = self._select(self.query, docs, prior)[0]
        if not 0 <= winner < len(docs):
            raise OracleError(f"winner {winner} out of range for arity {len(docs)}")
        return winner

    def _verdict(self, docs: Sequence[Document], prior: bool) -> OracleVerdict:
        v = self._rank(self.query, docs, prior)
        if v.ordering is None or len(v.ordering) != len(docs):
            raise OracleError("rank_set verdict has no ordering for every document")
        return v

    def best(self, docs: Sequence[Document]) -> int:
        if not self.use_prior:
            return self._winner(docs, False)
        layout = self._prior_layout(docs)
        return layout[self._winner([docs[i] for i in layout], True)]

    def best_led(self, docs: Sequence[Document]) -> int:
        return self._winner(docs, self.use_prior)

    def best_plain(self, docs: Sequence[Document]) -> int:
        return self._winner(docs, False)

    def order(self, docs: Sequence[Document]) -> OracleVerdict:
        if not self.use_prior:
            return self._verdict(docs, False)
        layout = self._prior_layout(docs)
        v = self._verdict([docs[i] for i in layout], True)
        ordering = tuple(layout[i] for i in v.ordering)
        weights = None
        if v.weights is not None:
            remapped = [0.0] * len(docs)
            for slot, i in enumerate(layout):
                remapped[i] = v.weights[slot]
            weights = tuple(remapped)
        return v._replace(winner=ordering[0], ordering=ordering, weights=weights)

    def order_led(self, docs: Sequence[Document]) -> OracleVerdict:
        return self._verdict(docs, self.use_prior)

    def order_plain(self, docs: Sequence[Document]) -> OracleVerdict:
        return self._verdict(docs, False)

    def score(self, doc: Document) -> float:
        v = self.recorder.invoke(OracleRequest(self.query, (doc,), SCORE_ONE, False))
        if v.score is None:
            raise OracleError("score_one verdict has no score")
        return float(v.score)
