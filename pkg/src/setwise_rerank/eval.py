"""Effectiveness metrics and their aggregation.

NDCG follows the trec_eval convention: gain ``2**grade - 1``, discount
``log2(rank + 1)``, ideal DCG over every judged document of the query.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from scipy import stats

from .core import Qrels, Ranking
from .errors import DocSetMismatch, UnknownQuery
from .trec import atomic_write

AGGREGATE_ROW = "all"
CSV_HEADER = ("method", "query_id", "metric", "value")


def dcg(grades: Iterable[int | float]) -> float:
    return sum((2.0**g - 1.0) / math.log2(i + 2) for i, g in enumerate(grades))


def ndcg_at_k(ranking: Ranking, qrels: Qrels, k: int = 10) -> float:
    """NDCG@k of ``ranking`` against ``qrels``; 0.0 when no judged doc is relevant."""
    if k < 1:
        raise ValueError("k must be at least 1")
    judged = qrels.judged(ranking.query_id)
    ideal = dcg(sorted(judged.values(), reverse=True)[:k])
    if ideal <= 0.0:
        return 0.0
    gains = [judged.get(doc_id, 0) for doc_id, _ in ranking.entries[:k]]
    return dcg(gains) / ideal


def count_inversions(seq: Sequence[int]) -> int:
    """Pairs ``i < j`` with ``seq[i] > seq[j]``, by merge sort."""
    arr = list(seq)
    buf = [0] * len(arr)
    inv = 0
    width = 1
    n = len(arr)
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, out = lo, mid, lo
            while i < mid and j < hi:
                if arr[j] < arr[i]:
                    buf[out] = arr[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[out] = arr[i]
                    i += 1
                out += 1
            buf[out : out + mid - i] = arr[i:mid]
            out += mid - i
            buf[out : out + hi - j] = arr[j:hi]
        arr, buf = buf, arr
        width *= 2
    return inv


def kendall_tau(a: Ranking, b: Ranking) -> float:
    """Kendall tau between two orderings of the same documents."""
    ids_a, ids_b = a.doc_ids, b.doc_ids
    pos = {d: i for i, d in enumerate(ids_b)}
    if len(ids_a) != len(ids_b) or set(ids_a) != pos.keys():
        raise DocSetMismatch(f"rankings for {a.query_id!r} and {b.query_id!r} hold different documents")
    m = len(ids_a)
    if m < 2:
        return 1.0
    pairs = m * (m - 1) // 2
    return 1.0 - 2.0 * count_inversions([pos[d] for d in ids_a]) / pairs


def grade_tau(order: Sequence[str], grades: Mapping[str, int]) -> float:
    """Agreement of ``order`` with graded truth, ignoring pairs of equal grade.

    ``(concordant - discordant) / (concordant + discordant)`` over document
    pairs whose grades differ (Goodman-Kruskal gamma).  A grade-sorted order
    scores 1.0 whatever it does inside tied blocks.  Returns 1.0 when every
    document has the same grade.
    """
    seen: dict[int, int] = {}
    conc = disc = 0
    for doc_id in order:
        g = grades.get(doc_id, 0)
        higher = sum(c for h, c in seen.items() if h > g)
        lower = sum(c for h, c in seen.items() if h < g)
        conc += higher
        disc += lower
        seen[g] = seen.get(g, 0) + 1
    total = conc + disc
    return 1.0 if total == 0 else (conc - disc) / total


def mean_ci(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Arithmetic mean and t-based confidence half-width (0.0 for one value)."""
    if not values:
        raise ValueError("need at least one value")
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 1)) * math.sqrt(var / n)
    return mean, half


def fingerprint(obj: Any) -> str:
    """Short stable digest of a JSON-serialisable configuration."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


@dataclass(frozen=True)
class MetricReport:
    method: str
    per_query: dict[str, dict[str, float]]
    mean: dict[str, float]
    ci: dict[str, float]
    fingerprint: str = ""
    n_reps: int = 1
    metrics: tuple[str, ...] = field(default=())

    @property
    def query_ids(self) -> list[str]:
        return sorted(self.per_query)

    @property
    def zero_width(self) -> bool:
        """True when the CI cannot be estimated (a single query)."""
        return len(self.per_query) < 2


def aggregate(
    reps: Sequence[Mapping[str, Mapping[str, float]]],
    method: str = "",
    config_fingerprint: str = "",
) -> MetricReport:
    """Fold one or more repetitions of ``query_id -> metric -> value``.

    Per-query values are averaged over repetitions; means and CIs are then
    taken over queries.  Every repetition must cover the same queries.
    """
    if not reps or not reps[0]:
        raise ValueError("aggregate needs at least one query")
    qids = sorted(reps[0])
    for r in reps[1:]:
        if sorted(r) != qids:
            raise DocSetMismatch("repetitions cover different queries")
    metrics = tuple(sorted({m for r in reps for row in r.values() for m in row}))
    per_query = {
        q: {m: math.fsum(r[q][m] for r in reps) / len(reps) for m in metrics if m in reps[0][q]} for q in qids
    }
    mean: dict[str, float] = {}
    ci: dict[str, float] = {}
    for m in metrics:
        vals = [per_query[q][m] for q in qids if m in per_query[q]]
        mean[m], ci[m] = mean_ci(vals)
    return MetricReport(method, per_query, mean, ci, config_fingerprint, len(reps), metrics)


def evaluate_run(
    run: Mapping[str, Ranking], qrels: Qrels, k: int = 10, method: str = "run", strict: bool = True
) -> MetricReport:
    """NDCG@k for every query in ``run``.

    With ``strict`` a query missing from ``qrels`` raises
    :class:`UnknownQuery`; otherwise it is skipped.
    """
    metric = f"ndcg@{k}"
    values: dict[str, dict[str, float]] = {}
    for qid in sorted(run):
        if qid not in qrels:
            if strict:
                raise UnknownQuery(qid)
            continue
        values[qid] = {metric: ndcg_at_k(run[qid], qrels, k)}
    return aggregate([values], method, fingerprint({"k": k, "method": method}))


def fmt(value: float) -> str:
    """Round-trip float formatting used by every CSV this package writes."""
    return repr(float(value))


def metric_rows(report: MetricReport) -> list[tuple[str, str, str, str]]:
    rows = [
        (report.method, q, m, fmt(report.per_query[q][m]))
        for q in report.query_ids
        for m in report.metrics
        if m in report.per_query[q]
    ]
    for m in report.metrics:
        rows.append((report.method, AGGREGATE_ROW, m, fmt(report.mean[m])))
        rows.append((report.method, AGGREGATE_ROW, f"{m}_ci95", fmt(report.ci[m])))
    return rows


def write_metric_csv(path: str | os.PathLike[str], reports: Iterable[MetricReport]) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for report in reports:
            w.writerows(metric_rows(report))


def read_metric_csv(path: str | os.PathLike[str]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
