"""Setwise insertion: keep a sorted top-k buffer and scan the rest in sets.

The first ``k`` documents of the first-stage ranking are sorted with the
setwise heap.  The remaining documents are consumed ``set_size - 1`` at a
time, each batch judged together with the weakest buffer member (the pivot,
always presented first).  A batch that cannot beat the pivot is dropped
whole, which is why a nearly sorted input costs little more than one scan.

A candidate that beats the pivot is walked up the buffer from the bottom,
``set_size - 1`` buffer members per call, until it loses; it is inserted
there and the pivot is evicted.

With the prior enabled, only the scan calls ask for the first-position
bias: the pivot is an incumbent of the buffer, so it is the document with
evidence behind it.  Position-search calls present the candidate first but
make no prior claim, since the candidate is the newcomer there.  The
initial sort uses the heap's own prior handling (first-stage order).
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

from ..core import Document
from ._judge import Judge
from .heap import heap_top_k

MAX_COMPARE = "max_compare"
SORT_COMPARE = "sort_compare"


def _locate_max(judge: Judge, buf: list[Document], cand: Document, step: int) -> int:
    """Insert position for ``cand``, already known to beat ``buf[-1]``.

    ``hi`` is the lowest member not yet compared and ``top`` the highest slot
    still possible.  A call the candidate wins moves ``hi`` above the chunk;
    a call it loses pins ``top`` just below the member that beat it.
    """
    top = 0
    hi = len(buf) - 2
    while hi >= top:
        lo = max(top, hi - step + 1)
        w = judge.best_plain([cand, *buf[lo : hi + 1]])
        if w == 0:
            hi = lo - 1
        else:
            top = lo + w
    return hi + 1


def _locate_sort(judge: Judge, buf: list[Document], cand: Document, step: int) -> int:
    """Same walk as :func:`_locate_max`, placing within a chunk from one ordering."""
    hi = len(buf) - 2
    while hi >= 0:
        lo = max(0, hi - step + 1)
        verdict = judge.order_plain([cand, *buf[lo : hi + 1]])
        ahead = verdict.ordering[: verdict.ordering.index(0)]
        if ahead:
            return lo + max(ahead)
        hi = lo - 1
    return 0


def insertion_top_k(
    judge: Judge,
    docs: Sequence[Document],
    k: int,
    set_size: int,
    compare_mode: str = MAX_COMPARE,
) -> tuple[list[Document], int, dict[str, int]]:
    """Return ``(top-k best first, promotions, calls per phase)``.

    ``docs`` must be in first-stage order.  Phases are ``sort`` (initial
    buffer), ``scan`` (pivot-versus-batch calls) and ``insert`` (position
    search for promoted candidates).
    """
    k = min(k, len(docs))
    step = set_size - 1
    phases = {"sort": 0, "scan": 0, "insert": 0}

    before = judge.calls
    buf = heap_top_k(judge, docs[:k], k, set_size)
    phases["sort"] = judge.calls - before
    queue = deque(docs[k:])
    promotions = 0

    while queue and k:
        batch = [queue.popleft() for _ in range(min(step, len(queue)))]
        group = [buf[-1], *batch]
        before = judge.calls
        if compare_mode == SORT_COMPARE:
            order = judge.order_led(group).ordering
            ahead = order[: order.index(0)]
            if not ahead:
                phases["scan"] += judge.calls - before
                continue
            promoted = group[ahead[0]]
            keep = [group[i] for i in sorted(ahead[1:])]
        else:
            w = judge.best_led(group)
            if w == 0:
                phases["scan"] += judge.calls - before
                continue
            promoted = group[w]
            keep = [d for i, d in enumerate(batch, 1) if i != w]
        phases["scan"] += judge.calls - before
        # unresolved candidates go back to the front, in their original order
        queue.extendleft(reversed(keep))

        before = judge.calls
        if compare_mode == SORT_COMPARE:
            pos = _locate_sort(judge, buf, promoted, step)
        else:
            pos = _locate_max(judge, buf, promoted, step)
        phases["insert"] += judge.calls - before
        buf.insert(pos, promoted)
        buf.pop()
        promotions += 1

    return buf, promotions, phases
