"""Top-k reranking over a comparison oracle: setwise heapsort, bubblesort,
setwise insertion and their pairwise, listwise and pointwise baselines."""

from __future__ import annotations

from .algorithms import RerankOutcome, rerank, rerank_ranking
from .core import AlgorithmConfig, CostLedger, Document, Qrels, Query, Ranking
from .errors import RerankError
from .oracle import NoiseModel, Oracle, PerfectOracle, RecordingOracle, SimulatedOracle

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig",
    "CostLedger",
    "Document",
    "NoiseModel",
    "Oracle",
    "PerfectOracle",
    "Qrels",
    "Query",
    "Ranking",
    "RecordingOracle",
    "RerankError",
    "RerankOutcome",
    "SimulatedOracle",
    "rerank",
    "rerank_ranking",
]
