from __future__ import annotations

import random
from typing import Sequence

import pytest
from hypothesis import HealthCheck, settings

from setwise_rerank.core import Document, Qrels, Query
from setwise_rerank.oracle import PerfectOracle

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_instance(grades: Sequence[int | float], qid: str = "q0") -> tuple[Query, list[Document], Qrels]:
    """Query, documents ``d000, d001, ...`` in the given order and their qrels."""
    docs = [Document(f"d{i:03d}", f"text {i}") for i in range(len(grades))]
    qrels = Qrels({qid: {d.doc_id: g for d, g in zip(docs, grades)}})
    return Query(qid, "query text"), docs, qrels


def permuted_instance(n: int, seed: int, qid: str = "q0") -> tuple[Query, list[Document], Qrels]:
    """Distinct grades ``0..n-1`` shuffled into a random first-stage order."""
    grades = list(range(n))
    random.Random(seed).shuffle(grades)
    return make_instance(grades, qid)


def true_top(docs: Sequence[Document], qrels: Qrels, qid: str, k: int) -> list[str]:
    judged = qrels.judged(qid)
    return sorted((d.doc_id for d in docs), key=lambda d: -judged[d])[:k]


@pytest.fixture
def perfect_100():
    query, docs, qrels = permuted_instance(100, seed=7)
    return query, docs, qrels, PerfectOracle(qrels)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list[str]:
    """Lines ``PASS/FAIL <criterion>: <detail>`` shown again in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
