"""Top-k by heapsort over a comparison oracle.

One sift-down step asks the oracle for the best of a parent and its
children.  With set size ``c >= 3`` the heap has ``c - 1`` children per node
and the step is a single call; with ``c == 2`` (pairwise) the heap is binary
and the step takes one call per child, carrying the running winner.
"""

from __future__ import annotations

from typing import Sequence

from ..core import Document
from ._judge import Judge


def heap_arity(set_size: int) -> int:
    return max(2, set_size - 1)


def best_of(judge: Judge, items: Sequence[Document], set_size: int) -> int:
    """Index of the best of ``items`` using calls of at most ``set_size`` documents.

    The current winner always sits at position 0 of the next call.
    """
    win = 0
    i = 1
    while i < len(items):
        idx = [win, *range(i, min(i + set_size - 1, len(items)))]
        w = judge.best([items[j] for j in idx])
        win = idx[w]
        i += set_size - 1
    return win


def _sift_down(judge: Judge, heap: list[Document], i: int, size: int, set_size: int) -> None:
    d = heap_arity(set_size)
    while True:
        first = d * i + 1
        if first >= size:
            return
        children = range(first, min(first + d, size))
        w = best_of(judge, [heap[i], *(heap[c] for c in children)], set_size)
        if w == 0:
            return
        j = children[w - 1]
        heap[i], heap[j] = heap[j], heap[i]
        i = j


def heap_top_k(judge: Judge, docs: Sequence[Document], k: int, set_size: int) -> list[Document]:
    """The best ``min(k, n)`` documents, best first.

    Builds the max-heap bottom-up (sift-down from the last internal node),
    then pops the root ``k`` times; no sift is done after the final pop.
    """
    heap = list(docs)
    n = len(heap)
    k = min(k, n)
    d = heap_arity(set_size)
    for i in range((n - 2) // d, -1, -1):
        _sift_down(judge, heap, i, n, set_size)
    out: list[Document] = []
    size = n
    for t in range(k):
        out.append(heap[0])
        size -= 1
        if t == k - 1 or size == 0:
            break
        heap[0] = heap[size]
        _sift_down(judge, heap, 0, size, set_size)
    return out
