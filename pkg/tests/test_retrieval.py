import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clirank.corpus import CorpusFormatError
from clirank.ranker import RankedCandidates
from clirank.retrieval import (
    BM25Retriever,
    WeightedQuery,
    bm25_idf,
    bm25_search,
    build_index,
    construct_query,
    evaluate,
    paired_ttest,
    read_qrels,
    read_queries,
    read_run,
    read_topics,
    write_qrels,
    write_queries,
    write_run,
    write_topics,
)
from oracles import average_precision_reference, bm25_exhaustive

DOCS = {"d1": ("a", "b"), "d2": ("b",), "d3": ()}


class TestIndex:
    def test_postings(self):
        index = build_index(DOCS)
        assert index.postings["b"] == (("d1", 1), ("d2", 1))
        assert index.N == 3 and index.avg_doc_len == 1.0

    def test_average_length(self):
        assert build_index({"x": ("a",), "y": ("a", "b")}).avg_doc_len == 1.5

    def test_empty_document_indexed(self):
        index = build_index(DOCS)
        assert index.doc_len["d3"] == 0
        assert all(d != "d3" for ps in index.postings.values() for d, _ in ps)

    def test_duplicate_id(self):
        with pytest.raises(ValueError, match="d1"):
            build_index([("d1", ("a",)), ("d1", ("b",))])

    def test_empty_collection(self):
        with pytest.raises(ValueError):
            build_index({})

    def test_save_byte_identical(self, tmp_path):
        a = build_index(DOCS)
        b = build_index(dict(reversed(list(DOCS.items()))))
        a.save(tmp_path / "a.json")
        b.save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert type(a).load(tmp_path / "a.json") == a


class TestBM25:
    def test_two_documents_by_hand(self):
        docs = {"d1": ("x", "y"), "d2": ("y", "y", "z", "w")}
        index = build_index(docs)
        k1, b, avg = 1.2, 0.75, 3.0
        idf_y = math.log((2 - 2 + 0.5) / (2 + 0.5) + 1)
        d1 = idf_y * 1 * (k1 + 1) / (1 + k1 * (1 - b + b * 2 / avg))
        d2 = idf_y * 2 * (k1 + 1) / (2 + k1 * (1 - b + b * 4 / avg))
        got = dict(bm25_search(index, WeightedQuery((("y", 1.0),))))
        assert got["d1"] == pytest.approx(d1, abs=1e-12)
        assert got["d2"] == pytest.approx(d2, abs=1e-12)

    def test_idf_positive_for_common_terms(self):
        assert bm25_idf(10, 10) > 0

    def test_more_occurrences_rank_higher(self):
        docs = {"d1": ("a", "b", "c"), "d2": ("a", "a", "c")}
        assert bm25_search(build_index(docs), WeightedQuery((("a", 1.0),)))[0][0] == "d2"

    def test_weight_doubles_score(self):
        index = build_index({"d1": ("a", "b"), "d2": ("b", "c")})
        one = dict(bm25_search(index, WeightedQuery((("a", 1.0),))))
        two = dict(bm25_search(index, WeightedQuery((("a", 2.0),))))
        assert two["d1"] == pytest.approx(2 * one["d1"], abs=1e-12)

    def test_unweighted_ignores_weights(self):
        index = build_index({"d1": ("a",), "d2": ("b",)})
        q = WeightedQuery((("a", 0.1), ("b", 0.9)))
        assert bm25_search(index, q, weighted=False) == bm25_search(index, q.unweighted())

    def test_no_match_empty(self):
        assert bm25_search(build_index(DOCS), WeightedQuery((("zz", 1.0),))) == []

    def test_cutoff(self):
        assert len(bm25_search(build_index(DOCS), WeightedQuery((("b", 1.0),)), k=1)) == 1
        with pytest.raises(ValueError):
            bm25_search(build_index(DOCS), WeightedQuery((("b", 1.0),)), k=0)

    @given(st.dictionaries(st.sampled_from([f"d{i}" for i in range(8)]),
                           st.lists(st.sampled_from("abcde"), max_size=6).map(tuple), min_size=1),
           st.dictionaries(st.sampled_from("abcdef"), st.floats(0.1, 3.0), min_size=1))
    @settings(max_examples=150)
    def test_matches_exhaustive(self, docs, weights):
        if sum(map(len, docs.values())) == 0:
            return
        q = WeightedQuery(tuple(weights.items()))
        got = bm25_search(build_index(docs), q)
        ref = bm25_exhaustive(docs, q.terms)
        assert dict(got) == pytest.approx(dict(ref), abs=1e-9)
        assert got == sorted(got, key=lambda r: (-r[1], r[0]))

    def test_retriever_estimator(self):
        model = BM25Retriever().fit(DOCS)
        out = model.predict({"q": WeightedQuery((("b", 1.0),))})
        assert [d for d, _ in out["q"]] == ["d2", "d1"]


class TestEvaluate:
    def test_perfect_run(self):
        res = evaluate({"q": ["d1", "d2"]}, {"q": {"d1": 1}})
        assert res.map == 1.0 and res.p5 == 0.2

    def test_relevant_never_retrieved(self):
        res = evaluate({"q": ["d2"]}, {"q": {"d1": 1, "d9": 1}})
        assert res.map == 0.0

    def test_second_position(self):
        assert evaluate({"q": [("x", 2.0), ("d1", 1.0)]}, {"q": {"d1": 1}}).map == 0.5

    def test_excluded_queries(self):
        res = evaluate({"q": ["d1"], "r": ["d1"]}, {"q": {"d1": 1}, "r": {"d1": 0}})
        assert res.excluded == 1 and list(res.ap) == ["q"]

    def test_unjudged_query(self):
        with pytest.raises(ValueError):
            evaluate({"q": ["d1"]}, {})

    def test_to_json_keys(self):
        obj = evaluate({"q": ["d1"]}, {"q": {"d1": 1}}, oov=3).to_json()
        assert {"map", "p@5", "p@10", "oov", "per_query_ap"} <= set(obj) and obj["oov"] == 3

    @given(st.lists(st.sampled_from([f"d{i}" for i in range(15)]), unique=True, max_size=15),
           st.sets(st.sampled_from([f"d{i}" for i in range(15)]), min_size=1))
    def test_matches_reference(self, ranked, relevant):
        res = evaluate({"q": ranked}, {"q": {d: 1 for d in relevant}})
        assert res.map == pytest.approx(average_precision_reference(ranked, relevant), abs=1e-12)
        assert res.p10 == pytest.approx(sum(d in relevant for d in ranked[:10]) / 10)

    def test_query_order_invariant(self):
        rng = random.Random(0)
        run = {f"q{i}": rng.sample([f"d{j}" for j in range(10)], 10) for i in range(8)}
        qrels = {q: {f"d{j}": int(rng.random() < 0.3) for j in range(10)} for q in run}
        shuffled = dict(sorted(run.items(), key=lambda _: rng.random()))
        assert evaluate(run, qrels).map == evaluate(shuffled, qrels).map


class TestTTest:
    def test_degenerate(self):
        with pytest.raises(ValueError):
            paired_ttest([0.1, 0.2], [0.1, 0.2])
        with pytest.raises(ValueError):
            paired_ttest([0.1], [0.2])

    def test_antisymmetric(self):
        a, b = [0.2, 0.5, 0.4, 0.9], [0.1, 0.3, 0.5, 0.6]
        t1, df, p1 = paired_ttest(a, b)
        t2, _, p2 = paired_ttest(b, a)
        assert t1 == pytest.approx(-t2) and p1 == pytest.approx(p2) and df == 3

    def test_matches_scipy(self):
        from scipy.stats import ttest_rel

        a, b = [0.2, 0.5, 0.4, 0.9, 0.3], [0.1, 0.3, 0.5, 0.6, 0.3]
        ref = ttest_rel(a, b)
        t, _, p = paired_ttest(a, b)
        assert t == pytest.approx(ref.statistic) and p == pytest.approx(ref.pvalue)


def ranked(*pairs):
    return RankedCandidates(tuple((w, p, p) for w, p in pairs))


class TestConstructQuery:
    CUP = ranked(("فنجان", 0.46), ("جام", 0.4), ("لیوان", 0.03), ("پیمانه", 0.03), ("ساغر", 0.02))

    def test_four_terms(self):
        q = construct_query(["cup"], {"cup": self.CUP}, n=4)
        assert [t for t, _ in q.terms] == ["فنجان", "جام", "لیوان", "پیمانه"]
        assert math.fsum(w for _, w in q.terms) == pytest.approx(1.0)
        assert dict(q.terms)["جام"] == pytest.approx(0.4 / 0.92)

    def test_oov_verbatim(self):
        q = construct_query(["cup", "pele"], {"cup": self.CUP}, n=1)
        assert q.terms == (("فنجان", 1.0), ("pele", 1.0)) and q.oov == ("pele",)

    def test_shared_translation_merged(self):
        q = construct_query(["world", "globe"], {"world": ranked(("جهان", 1.0)), "globe": ranked(("جهان", 1.0))})
        assert q.terms == (("جهان", 2.0),)

    def test_unweighted(self):
        q = construct_query(["cup"], {"cup": self.CUP}, n=2, weighted=False)
        assert q.terms == (("فنجان", 1.0), ("جام", 1.0))

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            construct_query(["cup"], {}, n=0)
        with pytest.raises(ValueError):
            WeightedQuery((("a", 0.0),))
        with pytest.raises(ValueError):
            WeightedQuery((("a", 1.0), ("a", 1.0)))


class TestTrecFiles:
    def test_qrels_round_trip(self, tmp_path):
        qrels = {"1": {"d1": 1, "d2": 0}, "2": {"d3": 2}}
        write_qrels(qrels, tmp_path / "q")
        assert read_qrels(tmp_path / "q") == qrels

    def test_malformed_qrels(self, tmp_path):
        (tmp_path / "q").write_text("1 0 d1 1\n1 0 d2\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError) as info:
            read_qrels(tmp_path / "q")
        assert info.value.lineno == 2

    def test_run_round_trip(self, tmp_path):
        run = {"1": [("d2", 2.5), ("d1", 1.25)], "2": [("d3", 0.5)]}
        write_run(run, tmp_path / "r")
        assert read_run(tmp_path / "r") == run

    def test_topics_round_trip(self, tmp_path):
        topics = {"1": "world cup", "2": "brazil football"}
        write_topics(topics, tmp_path / "t")
        assert read_topics(tmp_path / "t") == topics

    def test_queries_round_trip(self, tmp_path):
        queries = {"1": WeightedQuery((("جام", 0.75), ("فنجان", 0.25)), ("pele",))}
        write_queries(queries, tmp_path / "q")
        assert read_queries(tmp_path / "q") == queries
