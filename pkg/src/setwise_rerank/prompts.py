"""Prompt templates for every comparison style.

Each template is a skeleton (``{query}``, ``{num}``, ``{passages}``) plus a
per-passage item (``{label}``, ``{passage_i}``).  Placeholders are always
whitespace-delimited, so the whitespace token count of a rendered prompt is
exactly ``overhead(arity) + query tokens + passage tokens``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .core import Document, Query, count_tokens
from .errors import ArityMismatch

LABELS = string.ascii_uppercase


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    skeleton: str
    item: str
    min_arity: int
    max_arity: int
    numeric_labels: bool = False
    separator: str = "\n\n"

    @property
    def overhead_tokens(self) -> int:
        """Tokens of the skeleton alone (no passages, empty query)."""
        return _overhead(self.name, 0)

    @property
    def per_doc_tokens(self) -> int:
        """Label tokens added by each passage on top of its own text."""
        return count_tokens(self.item.format(label="1" if self.numeric_labels else "A", passage_i=""))

    def label(self, i: int) -> str:
        return str(i + 1) if self.numeric_labels else LABELS[i]


_SETWISE_HEAD = (
    "Given a query: {query}\n"
    "Which of the following passages is the most relevant one to the query?\n\n"
    "{passages}\n\n"
)
_SETWISE_TAIL = "Output only the passage label of the most relevant passage:"
_PRIOR_CLAUSE = (
    "The passages are listed in order of prior relevance, so Passage A is the strongest "
    "candidate so far. If you are uncertain which passage is the most relevant, choose Passage A.\n\n"
)

TEMPLATES: dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        PromptTemplate(
            "pointwise_yesno",
            "Passage: {passages}\nQuery: {query}\n"
            'Does the passage answer the query? Answer "Yes" or "No".',
            "{passage_i}",
            1,
            1,
        ),
        PromptTemplate(
            "pointwise_qlm",
            "Passage: {passages}\nPlease write a question based on this passage.",
            "{passage_i}",
            1,
            1,
        ),
        PromptTemplate(
            "pairwise",
            "Given a query: {query}\n"
            "Which of the following passages is more relevant to the query?\n\n"
            "{passages}\n\nOutput Passage A or Passage B.",
            "Passage {label}: {passage_i}",
            2,
            2,
        ),
        PromptTemplate(
            "listwise",
            "The following are {num} passages, each indicated by number identifier [].\n"
            "I can rank them based on their relevance to query: {query}\n\n"
            "{passages}\n\n"
            "The ranking results of the {num} passages (only identifiers) is:",
            "[{label}] {passage_i}",
            1,
            100,
            numeric_labels=True,
            separator="\n",
        ),
        PromptTemplate("setwise_plain", _SETWISE_HEAD + _SETWISE_TAIL, "Passage {label}: {passage_i}", 2, 26),
        PromptTemplate(
            "setwise_prior",
            _SETWISE_HEAD + _PRIOR_CLAUSE + _SETWISE_TAIL,
            "Passage {label}: {passage_i}",
            2,
            26,
        ),
    )
}


def template_for(kind: str, arity: int, prior_ordered: bool, pointwise: str = "pointwise_yesno") -> PromptTemplate:
    """Template used for a request of ``kind``.

    select_best over two passages uses the pairwise prompt unless a prior
    clause is wanted, in which case the setwise prior prompt is used.
    """
    if kind == "score_one":
        return TEMPLATES[pointwise]
    if kind == "rank_set":
        return TEMPLATES["listwise"]
    if prior_ordered:
        return TEMPLATES["setwise_prior"]
    return TEMPLATES["pairwise" if arity == 2 else "setwise_plain"]


def render_prompt(
    template: PromptTemplate | str,
    query: Query | str,
    docs: Sequence[Document],
    use_prior: bool = False,
) -> str:
    """Fill ``template`` with the query and passages, labelled in presentation order.

    With ``use_prior`` a plain setwise or pairwise template is swapped for the
    prior-aware setwise prompt; the caller guarantees ``docs[0]`` is the
    document with the strongest prior.
    """
    if isinstance(template, str):
        template = TEMPLATES[template]
    if use_prior and template.name in ("setwise_plain", "pairwise"):
        template = TEMPLATES["setwise_prior"]
    n = len(docs)
    if not template.min_arity <= n <= template.max_arity:
        raise ArityMismatch(
            f"{template.name} takes {template.min_arity}..{template.max_arity} passages, got {n}"
        )
    qtext = query.text if isinstance(query, Query) else query
    passages = template.separator.join(
        template.item.format(label=template.label(i), passage_i=d.text) for i, d in enumerate(docs)
    )
    return template.skeleton.format(query=qtext, num=n, passages=passages)


@lru_cache(maxsize=None)
def _overhead(name: str, arity: int) -> int:
    t = TEMPLATES[name]
    passages = t.separator.join(t.item.format(label=t.label(i), passage_i="") for i in range(arity))
    return count_tokens(t.skeleton.format(query="", num=max(arity, 1), passages=passages))


def prompt_overhead(name: str, arity: int) -> int:
    """Template tokens of a rendered prompt with ``arity`` passages, excluding query and passage text."""
    return _overhead(name, arity)
