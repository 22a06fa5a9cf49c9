"""Top-k by bubblesort with windows of ``set_size`` documents.

Pass ``i`` walks a window from the bottom of the list up to position ``i``;
each placement asks for the best document in the window and swaps it to the
window's top slot, which is also the bottom slot of the next placement.
"""

from __future__ import annotations

from typing import Sequence

from ..core import Document
from ._judge import Judge


def bubble_top_k(
    judge: Judge,
    docs: Sequence[Document],
    k: int,
    set_size: int,
    early_exit: bool = True,
) -> list[Document]:
    """Best ``min(k, n)`` documents, best first.

    With ``early_exit`` a window whose exact contents were already judged in
    this run reuses that verdict instead of calling the oracle again.  For a
    deterministic judge this skips the untouched tail of the list; with
    ``set_size == 2`` a pass without swaps makes every later pass free.
    """
    arr = list(docs)
    n = len(arr)
    step = set_size - 1
    seen: dict[tuple[str, ...], int] = {}
    for i in range(min(k, n)):
        end = n - 1
        while end > i:
            start = max(i, end - step)
            window = arr[start : end + 1]
            key = tuple([d.doc_id for d in window])
            w = seen.get(key) if early_exit else None
            if w is None:
                w = judge.best(window)
                if early_exit:
                    seen[key] = w
            if w:
                arr[start], arr[start + w] = arr[start + w], arr[start]
            end = start
    return arr[: min(k, n)]
