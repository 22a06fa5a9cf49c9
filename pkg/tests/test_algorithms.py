from __future__ import annotations

import math
import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_instance, permuted_instance, true_top
from setwise_rerank.algorithms import (
    listwise_rerank,
    pairwise_allpair,
    pairwise_bubblesort,
    pairwise_heapsort,
    pointwise_rerank,
    rerank,
    rerank_ranking,
    setwise_bubblesort,
    setwise_heapsort,
    setwise_insertion,
)
from setwise_rerank.algorithms._judge import Judge
from setwise_rerank.algorithms.baselines import allpair_top_k
from setwise_rerank.core import METHODS, AlgorithmConfig, Document, Query
from setwise_rerank.errors import DuplicateDoc, UnsupportedCapability
from setwise_rerank.oracle import RANK_SET, SELECT_BEST, NoiseModel, Oracle, OracleVerdict, PerfectOracle, SimulatedOracle
from setwise_rerank.synth import SynthConfig, generate


def run_all(query, docs, k, oracle, c):
    """Every method that must be exact under a noise-free oracle."""
    n = len(docs)
    out = {
        "pointwise": pointwise_rerank(query, docs, k, oracle),
        "allpair": pairwise_allpair(query, docs, k, oracle),
        "pheap": pairwise_heapsort(query, docs, k, oracle),
        "pbubble": pairwise_bubblesort(query, docs, k, oracle),
        "listwise": listwise_rerank(query, docs, k, oracle, passes=max(n, 1)),
        "sheap": setwise_heapsort(query, docs, k, oracle, c),
        "sbubble": setwise_bubblesort(query, docs, k, oracle, c),
    }
    for mode in ("max_compare", "sort_compare"):
        for prior in (False, True):
            out[f"ins-{mode}-{prior}"] = setwise_insertion(query, docs, k, oracle, c, mode, prior)
    return out


class TestPerfectOracleCorrectness:
    @given(
        st.lists(st.integers(0, 4), min_size=1, max_size=40),
        st.integers(1, 45),
        st.integers(2, 6),
    )
    def test_grade_profile_of_every_method(self, grades, k, c):
        query, docs, qrels = make_instance(grades)
        expected = sorted(grades, reverse=True)[:k]
        for name, outcome in run_all(query, docs, k, PerfectOracle(qrels), c).items():
            got = [qrels.grade("q0", d) for d in outcome.doc_ids]
            assert got == expected, name
            assert len(set(outcome.doc_ids)) == len(got)

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_top_10_of_100(self, seed):
        query, docs, qrels = permuted_instance(100, seed)
        want = true_top(docs, qrels, "q0", 10)
        for name, outcome in run_all(query, docs, 10, PerfectOracle(qrels), 3).items():
            assert outcome.doc_ids == want, name

    def test_scores_descend_from_k(self, perfect_100):
        query, docs, _, oracle = perfect_100
        r = setwise_heapsort(query, docs, 4, oracle).ranking
        assert [s for _, s in r.entries] == [4.0, 3.0, 2.0, 1.0]


class TestCallCounts:
    def test_allpair_n100(self, perfect_100):
        query, docs, _, oracle = perfect_100
        assert pairwise_allpair(query, docs, 10, oracle).ledger.calls_select_best == 4950

    def test_allpair_win_counts(self, perfect_100):
        query, docs, qrels, oracle = perfect_100
        _, wins = allpair_top_k(Judge(query, oracle), docs, 10)
        by_grade = sorted(range(100), key=lambda i: -qrels.grade("q0", docs[i].doc_id))
        assert [wins[i] for i in by_grade] == list(range(99, -1, -1))

    def test_allpair_two_docs(self):
        query, docs, qrels = make_instance([0, 1])
        out = pairwise_allpair(query, docs, 1, PerfectOracle(qrels))
        assert out.ledger.total_calls == 1 and out.doc_ids == ["d001"]

    def test_listwise_245(self, perfect_100):
        query, docs, _, oracle = perfect_100
        out = listwise_rerank(query, docs, 10, oracle, window=4, step=2, passes=5)
        assert out.ledger.calls_rank_set == 245

    @given(st.integers(2, 60), st.integers(2, 8), st.integers(1, 8), st.integers(1, 3))
    def test_listwise_formula(self, n, w, s, r):
        s = min(s, w)
        query, docs, qrels = make_instance(list(range(n)))
        out = listwise_rerank(query, docs, 1, PerfectOracle(qrels), w, s, r)
        per_pass = math.ceil((n - w) / s) + 1 if n > w else 1
        assert out.ledger.calls_rank_set == r * per_pass

    def test_listwise_single_window(self):
        query, docs, qrels = make_instance([1, 5, 3, 2])
        out = listwise_rerank(query, docs, 4, PerfectOracle(qrels), window=4, step=2, passes=1)
        assert out.ledger.total_calls == 1
        assert out.doc_ids == ["d001", "d002", "d003", "d000"]

    def test_bubble_475_without_early_exit(self, perfect_100):
        query, docs, _, oracle = perfect_100
        out = setwise_bubblesort(query, docs, 10, oracle, 3, early_exit=False)
        assert out.ledger.total_calls == sum(math.ceil((99 - i) / 2) for i in range(10)) == 475

    def test_bubble_early_exit_on_sorted_input(self):
        query, docs, qrels = make_instance(list(range(50, 0, -1)))
        out = pairwise_bubblesort(query, docs, 10, PerfectOracle(qrels))
        # pass one judges every adjacent pair; later passes replay them
        assert out.ledger.total_calls == 49

    def test_bubble_c2_is_classic_bubblesort(self):
        query, docs, qrels = permuted_instance(30, seed=4)
        out = setwise_bubblesort(query, docs, 5, PerfectOracle(qrels), 2, early_exit=False)
        assert out.ledger.total_calls == sum(29 - i for i in range(5))

    def test_heap_singleton(self):
        query, docs, qrels = make_instance([3])
        out = setwise_heapsort(query, docs, 10, PerfectOracle(qrels))
        assert out.ledger.total_calls == 0 and out.doc_ids == ["d000"]

    def test_heap_bound_on_first_stage_order(self):
        world = generate(SynthConfig(n_queries=40, initial_noise=0.75, rng_seed=2))
        oracle = PerfectOracle(world.qrels)
        for q in world.queries:
            docs = world.first_stage_docs(q.query_id)
            s = setwise_heapsort(q, docs, 10, oracle, 3).ledger.total_calls
            p = pairwise_heapsort(q, docs, 10, oracle).ledger.total_calls
            assert 60 <= s <= 135
            assert s < p

    def test_setwise_heap_cheaper_on_random_permutations(self):
        ratios = []
        for seed in range(20):
            query, docs, qrels = permuted_instance(100, seed)
            o = PerfectOracle(qrels)
            s = setwise_heapsort(query, docs, 10, o, 3).ledger.total_calls
            p = pairwise_heapsort(query, docs, 10, o).ledger.total_calls
            ratios.append(s / p)
        assert max(ratios) < 0.65

    @given(st.integers(1, 150), st.integers(1, 20), st.integers(3, 6), st.integers(0, 10**6))
    def test_heap_call_bound(self, n, k, c, seed):
        query, docs, qrels = permuted_instance(n, seed)
        calls = setwise_heapsort(query, docs, k, PerfectOracle(qrels), c).ledger.total_calls
        depth = math.ceil(math.log(n, c - 1)) if n > 1 else 0
        assert calls <= n + k * depth + k

    @given(st.integers(20, 120), st.integers(1, 20), st.integers(3, 5), st.integers(0, 10**6))
    def test_setwise_heap_beats_pairwise_on_every_input(self, n, k, c, seed):
        query, docs, qrels = permuted_instance(n, seed)
        oracle = PerfectOracle(qrels)
        s = setwise_heapsort(query, docs, k, oracle, c).ledger.total_calls
        assert s < pairwise_heapsort(query, docs, k, oracle).ledger.total_calls

    def test_pointwise_counts_and_full_permutation(self, perfect_100):
        query, docs, _, oracle = perfect_100
        out = pointwise_rerank(query, docs, 100, oracle)
        assert out.ledger.calls_score == 100
        assert sorted(out.doc_ids) == sorted(d.doc_id for d in docs)


class TestInsertion:
    @pytest.mark.parametrize("n, k, c", [(100, 10, 3), (100, 10, 5), (50, 5, 4), (200, 20, 2), (12, 10, 3)])
    def test_sorted_input_scan_count(self, n, k, c):
        world = generate(SynthConfig(n_queries=3, n_docs=n, initial_noise=0.0, rng_seed=1))
        oracle = PerfectOracle(world.qrels)
        for q in world.queries:
            docs = world.first_stage_docs(q.query_id)
            out = setwise_insertion(q, docs, k, oracle, c)
            sort_only = setwise_heapsort(q, docs[:k], k, oracle, c).ledger.total_calls
            assert out.promotions == 0
            assert out.phases["scan"] == math.ceil((n - k) / (c - 1))
            assert out.ledger.total_calls == out.phases["scan"] + sort_only

    def test_forty_five_scan_calls(self):
        world = generate(SynthConfig(n_queries=1, initial_noise=0.0))
        q = world.queries[0]
        out = setwise_insertion(q, world.first_stage_docs(q.query_id), 10, PerfectOracle(world.qrels), 3)
        assert out.phases["scan"] == 45

    @pytest.mark.parametrize("c", [3, 4, 5])
    @pytest.mark.parametrize("seed", range(4))
    def test_adversarial_top_last(self, c, seed):
        # everything before the true top 10 is already in order, so exactly
        # the last ten documents get promoted
        top = list(range(90, 100))
        random.Random(seed).shuffle(top)
        query, docs, qrels = make_instance(list(range(89, -1, -1)) + top)
        oracle = PerfectOracle(qrels)
        heap_calls = setwise_heapsort(query, docs, 10, oracle, c).ledger.total_calls
        want = true_top(docs, qrels, "q0", 10)
        per_insert = math.ceil(9 / (c - 1))
        for mode in ("max_compare", "sort_compare"):
            out = setwise_insertion(query, docs, 10, oracle, c, mode, use_prior=True)
            assert out.doc_ids == want
            assert out.promotions == 10
            assert out.ledger.total_calls <= heap_calls + 10 * per_insert
        sort_out = setwise_insertion(query, docs, 10, oracle, c, "sort_compare")
        assert sort_out.phases["insert"] <= 10 * per_insert

    def test_sort_compare_needs_weights(self):
        class NoWeights(Oracle):
            capabilities = frozenset({SELECT_BEST, RANK_SET})

            def invoke(self, req):
                return OracleVerdict(winner=0, ordering=tuple(range(req.arity)))

        query, docs, _ = make_instance([1, 2, 3])
        with pytest.raises(UnsupportedCapability):
            setwise_insertion(query, docs, 2, NoWeights(), compare_mode="sort_compare")

    def test_fewer_calls_than_heap_when_nearly_sorted(self):
        world = generate(SynthConfig(n_queries=30, initial_noise=0.75, rng_seed=3))
        oracle = PerfectOracle(world.qrels)
        ins = heap = 0
        for q in world.queries:
            docs = world.first_stage_docs(q.query_id)
            ins += setwise_insertion(q, docs, 10, oracle, 3, use_prior=True).ledger.total_calls
            heap += setwise_heapsort(q, docs, 10, oracle, 3).ledger.total_calls
        assert ins < 0.85 * heap


class _Spy(Oracle):
    """Records the presented order and prior flag of every call; first slot wins."""

    capabilities = frozenset({SELECT_BEST, RANK_SET})
    provides_weights = True

    def __init__(self):
        self.seen = []

    def invoke(self, req):
        self.seen.append(([d.doc_id for d in req.docs], req.prior_ordered))
        n = req.arity
        return OracleVerdict(0, tuple(range(n)), tuple(float(n - i) for i in range(n)), None, 1)


class TestJudgePriorLayout:
    docs = [Document(x) for x in ("a", "b", "c", "d")]
    rank = {"a": 0, "b": 1, "c": 2, "d": 3}

    def test_best_presents_by_prior_rank_and_maps_back(self):
        spy = _Spy()
        judge = Judge(Query("q"), spy, use_prior=True, prior_rank=self.rank)
        assert judge.best([self.docs[2], self.docs[0], self.docs[3]]) == 1
        assert spy.seen == [(["a", "c", "d"], True)]

    def test_order_remaps_ordering_and_weights(self):
        spy = _Spy()
        judge = Judge(Query("q"), spy, use_prior=True, prior_rank=self.rank)
        v = judge.order([self.docs[3], self.docs[1], self.docs[0]])
        assert v.ordering == (2, 1, 0) and v.winner == 2
        assert v.weights == (1.0, 2.0, 3.0)
        v.check(3)

    def test_led_and_plain_keep_layout(self):
        spy = _Spy()
        judge = Judge(Query("q"), spy, use_prior=True, prior_rank=self.rank)
        judge.best_led([self.docs[3], self.docs[0]])
        judge.best_plain([self.docs[3], self.docs[0]])
        assert spy.seen == [(["d", "a"], True), (["d", "a"], False)]

    def test_no_prior_never_reorders(self):
        spy = _Spy()
        judge = Judge(Query("q"), spy, use_prior=False, prior_rank=self.rank)
        judge.best([self.docs[2], self.docs[0]])
        judge.order_led([self.docs[2], self.docs[0]])
        assert spy.seen == [(["c", "a"], False), (["c", "a"], False)]


class TestDispatchAndRobustness:
    @pytest.mark.parametrize("method", METHODS)
    def test_rerank_dispatch(self, method):
        world = generate(SynthConfig(n_queries=1, n_docs=30, initial_noise=0.5))
        q = world.queries[0]
        cfg = AlgorithmConfig(method, k=5, passes=30)
        out = rerank_ranking(q, world.initial[q.query_id], world.docs_by_id[q.query_id], cfg, PerfectOracle(world.qrels))
        grades = [world.qrels.grade(q.query_id, d) for d in out.doc_ids]
        assert grades == sorted(world.qrels.judged(q.query_id).values(), reverse=True)[:5]

    def test_duplicate_docs_rejected(self):
        query, docs, qrels = make_instance([1, 2])
        with pytest.raises(DuplicateDoc):
            setwise_heapsort(query, docs + docs[:1], 2, PerfectOracle(qrels))

    @given(
        st.lists(st.integers(0, 3), min_size=2, max_size=30),
        st.integers(1, 12),
        st.integers(2, 5),
        st.sampled_from(METHODS),
        st.booleans(),
        st.integers(0, 1000),
    )
    def test_noisy_oracle_returns_distinct_inputs(self, grades, k, c, method, prior, seed):
        query, docs, qrels = make_instance(grades)
        oracle = SimulatedOracle(qrels, NoiseModel(temperature=1.0), seed)
        cfg = AlgorithmConfig(method, k=k, set_size=c, use_prior=prior, passes=2)
        ids = rerank(query, docs, cfg, oracle).doc_ids
        assert len(ids) == min(k, len(docs)) == len(set(ids))
        assert set(ids) <= {d.doc_id for d in docs}

    def test_seeded_noise_is_reproducible(self):
        query, docs, qrels = permuted_instance(60, seed=9)
        noise = NoiseModel(temperature=0.5)
        a = setwise_insertion(query, docs, 10, SimulatedOracle(qrels, noise, 4), use_prior=True)
        b = setwise_insertion(query, docs, 10, SimulatedOracle(qrels, noise, 4), use_prior=True)
        assert a.doc_ids == b.doc_ids and a.ledger.total_calls == b.ledger.total_calls

    def test_ledger_docs_match_calls(self):
        query, docs, qrels = permuted_instance(40, seed=1)
        led = setwise_heapsort(query, docs, 5, PerfectOracle(qrels), 4).ledger
        assert led.total_docs_in_calls <= 4 * led.calls_select_best
        assert statistics.mean([led.total_docs_in_calls / led.calls_select_best]) >= 2
