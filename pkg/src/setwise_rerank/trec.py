"""TREC run / qrels files and the JSONL corpus.

Run lines are ``qid Q0 docid rank score tag``; qrels lines are
``qid 0 docid grade``.  Parse failures carry the file name and line number.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

from .core import Document, Qrels, Ranking
from .errors import DataError, ParseError


@contextmanager
def atomic_write(path: str | os.PathLike[str]) -> Iterator[IO[str]]:
    """Write through a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def read_run(path: str | os.PathLike[str]) -> dict[str, Ranking]:
    """Parse a run file into one canonical :class:`Ranking` per query."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ParseError(str(path), no, f"expected 6 fields, got {len(parts)}")
            qid, _, docid, rank, score, _tag = parts
            try:
                r, s = int(rank), float(score)
            except ValueError:
                raise ParseError(str(path), no, "rank/score not numeric") from None
            if not math.isfinite(s):
                raise ParseError(str(path), no, "score not finite")
            if (qid, docid) in seen:
                raise ParseError(str(path), no, f"duplicate doc {docid!r} for query {qid!r}")
            seen.add((qid, docid))
            rows.setdefault(qid, []).append((r, docid, s))
    if not rows:
        raise DataError(f"{path}: run file is empty")
    out = {}
    for qid, entries in rows.items():
        # score order wins over the rank column; ties fall back to doc_id
        out[qid] = Ranking.from_scores(qid, [(d, s) for _, d, s in entries])
    return out


def format_run(rankings: Iterable[Ranking], tag: str) -> Iterator[str]:
    for r in rankings:
        for rank, (doc_id, score) in enumerate(r.entries, 1):
            yield f"{r.query_id} Q0 {doc_id} {rank} {score:.6f} {tag}\n"


def write_run(path: str | os.PathLike[str], rankings: Iterable[Ranking], tag: str = "rerank") -> None:
    with atomic_write(path) as fh:
        fh.writelines(format_run(rankings, tag))


def read_qrels(path: str | os.PathLike[str]) -> Qrels:
    data: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(str(path), no, f"expected 4 fields, got {len(parts)}")
            qid, _, docid, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise ParseError(str(path), no, f"grade {grade!r} is not an integer") from None
            if g < 0:
                # trec_eval treats negative grades as non-relevant
                g = 0
            data.setdefault(qid, {})[docid] = g
    if not data:
        raise DataError(f"{path}: qrels file is empty")
    return Qrels(data)


def write_qrels(path: str | os.PathLike[str], qrels: Qrels) -> None:
    with atomic_write(path) as fh:
        for qid in qrels.query_ids():
            for docid, g in sorted(qrels.judged(qid).items()):
                fh.write(f"{qid} 0 {docid} {g}\n")


def read_corpus(path: str | os.PathLike[str]) -> dict[str, Document]:
    docs: dict[str, Document] = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = Document(doc_id=str(obj["doc_id"]), text=str(obj.get("text", "")))
            except (json.JSONDecodeError, KeyError, TypeError, DataError) as exc:
                raise ParseError(str(path), no, f"bad corpus record ({exc})") from None
            if doc.doc_id in docs:
                raise ParseError(str(path), no, f"duplicate doc_id {doc.doc_id!r}")
            docs[doc.doc_id] = doc
    return docs


def write_corpus(path: str | os.PathLike[str], docs: Iterable[Document]) -> None:
    with atomic_write(path) as fh:
        for d in docs:
            fh.write(json.dumps({"doc_id": d.doc_id, "text": d.text}, ensure_ascii=False) + "\n")


def read_queries(path: str | os.PathLike[str]) -> dict[str, str]:
    """Tab-separated ``qid<TAB>text`` topics file."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(str(path), no, "expected qid<TAB>text")
            qid, text = line.split("\t", 1)
            out[qid.strip()] = text.strip()
    return out


def write_queries(path: str | os.PathLike[str], queries: Mapping[str, str]) -> None:
    with atomic_write(path) as fh:
        for qid, text in queries.items():
            fh.write(f"{qid}\t{text}\n")
