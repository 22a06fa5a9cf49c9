"""Parsers for raw model answers.

Both parsers are total: any string yields either a valid index/permutation
or :class:`MalformedResponse`.
"""

from __future__ import annotations

import re

from ..errors import MalformedResponse

_PASSAGE_LABEL = re.compile(r"passage\s*[:#]?\s*\(?\[?([a-z])\b", re.IGNORECASE)
_BARE_LABEL = re.compile(r"(?<![A-Za-z0-9'])([A-Za-z])(?![A-Za-z0-9'])")
_IDENT = re.compile(r"\[\s*(\d+)\s*\]|(?<!\d)(\d+)(?!\d)")


def parse_select_best(raw: str, arity: int) -> int:
    """Index of the label chosen in ``raw`` ("Passage B", "b", "[C]" ...).

    An explicit "Passage X" wins over a bare letter; letters outside the
    first ``arity`` labels are skipped.
    """
    if arity < 2:
        raise ValueError("arity must be at least 2")
    for pattern in (_PASSAGE_LABEL, _BARE_LABEL):
        for m in pattern.finditer(raw):
            idx = ord(m.group(1).upper()) - ord("A")
            if 0 <= idx < arity:
                return idx
    raise MalformedResponse(raw, "no passage label found")


def parse_listwise_order(raw: str, arity: int) -> list[int]:
    """Permutation (best first) from identifiers like ``[2] > [1] > [3]``.

    Identifiers are 1-based; repeats and out-of-range numbers are ignored and
    identifiers the model left out are appended in presentation order.
    """
    if arity < 2:
        raise ValueError("arity must be at least 2")
    order: list[int] = []
    seen: set[int] = set()
    for m in _IDENT.finditer(raw):
        i = int(m.group(1) or m.group(2)) - 1
        if 0 <= i < arity and i not in seen:
            seen.add(i)
            order.append(i)
    if not order:
        raise MalformedResponse(raw, "no passage identifiers found")
    order.extend(i for i in range(arity) if i not in seen)
    return order
