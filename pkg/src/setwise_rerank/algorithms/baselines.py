"""Pointwise scoring, all-pairs voting and the listwise sliding window."""

from __future__ import annotations

from typing import Sequence

from ..core import Document
from ..errors import OracleError
from ._judge import Judge


def pointwise_top_k(judge: Judge, docs: Sequence[Document], k: int) -> list[Document]:
    """One score per document; ties keep presentation order."""
    scores = []
    for d in docs:
        try:
            scores.append(judge.score(d))
        except OracleError as exc:
            exc.doc_id = d.doc_id
            raise
    order = sorted(range(len(docs)), key=lambda i: (-scores[i], i))
    return [docs[i] for i in order[:k]]


def allpair_top_k(judge: Judge, docs: Sequence[Document], k: int) -> tuple[list[Document], list[int]]:
    """Compare every pair once; rank by win count, ties by presentation order."""
    n = len(docs)
    wins = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            w = judge.best((docs[i], docs[j]))
            wins[j if w else i] += 1
    order = sorted(range(n), key=lambda i: (-wins[i], i))
    return [docs[i] for i in order[:k]], wins


def listwise_top_k(
    judge: Judge,
    docs: Sequence[Document],
    k: int,
    window: int,
    step: int,
    passes: int,
) -> list[Document]:
    """Sliding-window reordering from the bottom of the list to the top.

    Window starts are ``n - window, n - window - step, ...``; when the last
    start would fall below 0 it is clamped to 0, so position 0 is always
    covered and every window holds ``min(window, n)`` documents.  Calls per
    pass: ``ceil((n - window) / step) + 1`` for ``n > window``, else 1.
    """
    arr = list(docs)
    n = len(arr)
    if n < 2:
        return arr[:k]
    width = min(window, n)
    for _ in range(passes):
        start = n - width
        while True:
            end = start + width
            verdict = judge.order(arr[start:end])
            arr[start:end] = [arr[start + j] for j in verdict.ordering]
            if start == 0:
                break
            start = max(0, start - step)
    return arr[:k]
