"""Domain types shared by the oracle, the algorithms and the harness.

Everything here is immutable once built.  ``to_dict``/``from_dict`` give a
JSON-friendly round trip for every type.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Mapping, Sequence

from .errors import ConfigError, DataError, DuplicateDoc, NonMonotoneScores, UnknownQuery

METHODS = (
    "pointwise_score",
    "pairwise_allpair",
    "pairwise_heapsort",
    "pairwise_bubblesort",
    "listwise_window",
    "setwise_heapsort",
    "setwise_bubblesort",
    "setwise_insertion",
)
COMPARE_MODES = ("max_compare", "sort_compare")
PAIRWISE_METHODS = ("pairwise_allpair", "pairwise_heapsort", "pairwise_bubblesort")


def count_tokens(text: str) -> int:
    """Whitespace token count; a model-agnostic proxy for tokenizer length."""
    return len(text.split())


@dataclass(frozen=True, slots=True)
class Document:
    doc_id: str
    text: str = ""
    prior_score: float = 0.0
    token_estimate: int | None = None

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise DataError("doc_id must be non-empty")
        if not math.isfinite(self.prior_score):
            raise DataError(f"prior_score of {self.doc_id!r} is not finite")
        n = count_tokens(self.text)
        if self.token_estimate is None:
            object.__setattr__(self, "token_estimate", n)
        elif self.token_estimate != n:
            raise DataError(
                f"token_estimate {self.token_estimate} != {n} whitespace tokens for {self.doc_id!r}"
            )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Document:
        return cls(
            doc_id=str(d["doc_id"]),
            text=d.get("text", ""),
            prior_score=float(d.get("prior_score", 0.0)),
            token_estimate=d.get("token_estimate"),
        )


@dataclass(frozen=True, slots=True)
class Query:
    query_id: str
    text: str = ""

    def __post_init__(self) -> None:
        if not self.query_id:
            raise DataError("query_id must be non-empty")

    @property
    def token_estimate(self) -> int:
        return count_tokens(self.text)

    def to_dict(self) -> dict[str, Any]:
        return {"query_id": self.query_id, "text": self.text}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Query:
        return cls(str(d["query_id"]), d.get("text", ""))


@dataclass(frozen=True, slots=True)
class Ranking:
    """Ordered ``(doc_id, score)`` entries, best first.

    Construct directly when the order is already known, or through
    :meth:`from_scores` to get the canonical order (score descending,
    doc_id ascending on ties).
    """

    query_id: str
    entries: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "entries", tuple((str(d), float(s)) for d, s in self.entries)
        )

    @classmethod
    def from_scores(cls, query_id: str, scores: Iterable[tuple[str, float]]) -> Ranking:
        ordered = sorted(scores, key=lambda e: (-e[1], e[0]))
        return cls(query_id, tuple(ordered))

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def top(self, k: int) -> Ranking:
        return Ranking(self.query_id, self.entries[:k])

    def to_dict(self) -> dict[str, Any]:
        return {"query_id": self.query_id, "entries": [list(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Ranking:
        return cls(str(d["query_id"]), tuple((e[0], e[1]) for e in d["entries"]))


def validate_ranking(r: Ranking) -> Ranking:
    """Return ``r`` unchanged if it has no duplicate ids and non-increasing scores."""
    seen: set[str] = set()
    prev = math.inf
    for pos, (doc_id, score) in enumerate(r.entries):
        if doc_id in seen:
            raise DuplicateDoc(doc_id)
        seen.add(doc_id)
        if not math.isfinite(score):
            raise DataError(f"non-finite score at position {pos}")
        if score > prev:
            raise NonMonotoneScores(pos)
        prev = score
    return r


class Qrels:
    """Graded judgments, ``query_id -> doc_id -> grade``.

    Unjudged pairs read as grade 0; asking about a query with no judgments at
    all is an error for :meth:`judged` but not for :meth:`grade`.
    """

    __slots__ = ("_data",)

    def __init__(self, data: Mapping[str, Mapping[str, int]] | None = None):
        clean: dict[str, dict[str, int]] = {}
        for qid, docs in (data or {}).items():
            row = {}
            for did, g in docs.items():
                g = int(g)
                if g < 0:
                    raise DataError(f"negative grade for ({qid}, {did})")
                row[str(did)] = g
            clean[str(qid)] = row
        self._data = clean

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._data.get(query_id, {}).get(doc_id, 0)

    def judged(self, query_id: str) -> dict[str, int]:
        try:
            return dict(self._data[query_id])
        except KeyError:
            raise UnknownQuery(query_id) from None

    def query_ids(self) -> list[str]:
        return sorted(self._data)

    def __contains__(self, query_id: object) -> bool:
        return query_id in self._data

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Qrels) and self._data == other._data

    def __repr__(self) -> str:
        return f"Qrels({len(self._data)} queries)"

    def to_dict(self) -> dict[str, dict[str, int]]:
        return {q: dict(d) for q, d in self._data.items()}

    @classmethod
    def from_dict(cls, d: Mapping[str, Mapping[str, int]]) -> Qrels:
        return cls(d)


@dataclass(frozen=True, slots=True)
class CostLedger:
    """Oracle cost of one run; combine per-query ledgers with ``+``.

    Wall time is kept in integer microseconds so merging stays exactly
    associative.
    """

    calls_select_best: int = 0
    calls_rank_set: int = 0
    calls_score: int = 0
    total_docs_in_calls: int = 0
    prompt_tokens: int = 0
    output_tokens: int = 0
    wall_us: int = 0

    @property
    def total_calls(self) -> int:
        return self.calls_select_best + self.calls_rank_set + self.calls_score

    @property
    def wall_ms(self) -> float:
        return self.wall_us / 1000.0

    def merge(self, other: CostLedger) -> CostLedger:
        return CostLedger(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    __add__ = merge

    def to_dict(self) -> dict[str, int]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, int]) -> CostLedger:
        return cls(**{f.name: int(d.get(f.name, 0)) for f in fields(cls)})


@dataclass(frozen=True, slots=True)
class AlgorithmConfig:
    method: str
    k: int = 10
    set_size: int = 3
    window: int = 4
    step: int = 2
    passes: int = 5
    use_prior: bool = False
    compare_mode: str = "max_compare"
    rng_seed: int = 0
    early_exit: bool = True
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.k < 1:
            raise ConfigError("k must be positive")
        if self.set_size < 2:
            raise ConfigError("set_size must be at least 2")
        if self.method in PAIRWISE_METHODS and self.set_size != 2:
            object.__setattr__(self, "set_size", 2)
        if self.window < 2:
            raise ConfigError("window must hold at least two documents")
        if min(self.step, self.passes) < 1:
            raise ConfigError("step and passes must be positive")
        if self.step > self.window:
            raise ConfigError("step must not exceed window")
        if self.compare_mode not in COMPARE_MODES:
            raise ConfigError(f"compare_mode must be one of {COMPARE_MODES}")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")
        if not self.label:
            object.__setattr__(self, "label", self.default_label())

    def default_label(self) -> str:
        parts = [self.method]
        if self.method.startswith("setwise"):
            parts.append(f"c{self.set_size}")
        if self.method == "setwise_insertion":
            parts.append("sort" if self.compare_mode == "sort_compare" else "max")
        if self.method == "listwise_window":
            parts.append(f"w{self.window}s{self.step}r{self.passes}")
        if self.use_prior:
            parts.append("prior")
        return "-".join(parts)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AlgorithmConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown algorithm option(s): {', '.join(sorted(unknown))}")
        return cls(**dict(d))


def order_by_ranking(ranking: Ranking, docs: Mapping[str, Document]) -> list[Document]:
    """Documents in first-stage order; every ranked id must be present in ``docs``."""
    out: list[Document] = []
    seen: set[str] = set()
    for doc_id, _ in ranking.entries:
        if doc_id in seen:
            raise DuplicateDoc(doc_id)
        seen.add(doc_id)
        try:
            out.append(docs[doc_id])
        except KeyError:
            raise DataError(f"ranked doc {doc_id!r} missing from corpus") from None
    return out


def unique_ids(docs: Sequence[Document]) -> None:
    seen: set[str] = set()
    for d in docs:
        if d.doc_id in seen:
            raise DuplicateDoc(d.doc_id)
        seen.add(d.doc_id)
