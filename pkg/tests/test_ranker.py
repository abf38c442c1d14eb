import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from clirank.features import SchemaMismatchError
from clirank.ranker import (
    CoordinateAscentRanker,
    ListMetric,
    PairwiseHingeRanker,
    RankedCandidates,
    RankingModel,
    make_ranker,
    mean_average_precision,
    score_and_rank,
    top_n,
)
from oracles import expected_ap_brute_force


def lists_strategy(max_lists=4, max_len=5):
    one = st.lists(st.tuples(st.integers(0, 3).map(float), st.integers(0, 1)), min_size=1, max_size=max_len)
    return st.lists(one, min_size=1, max_size=max_lists)


class TestListMetric:
    def test_ties_average_over_orderings(self):
        # one positive tied with one negative: AP is (1 + 1/2) / 2
        assert mean_average_precision([0.0, 0.0], [1, 0], [1, 1]) == pytest.approx(0.75)

    def test_perfect(self):
        assert mean_average_precision([2.0, 1.0, 0.0], [1, 0, 0], [1, 1, 1]) == 1.0

    def test_list_without_positive_is_ignored(self):
        m = ListMetric([0, 0, 1, 0], [1, 1, 2, 2])
        assert m.per_list(np.array([1.0, 0.0, 1.0, 0.0])).tolist() == [1.0]
        assert ListMetric([0, 0], [1, 1])(np.zeros(2)) == 0.0

    @given(lists_strategy())
    @settings(max_examples=150, deadline=None)
    def test_matches_brute_force(self, lists):
        scores, y, qid = [], [], []
        for q, items in enumerate(lists):
            for s, lab in items:
                scores.append(s)
                y.append(lab)
                qid.append(q)
        per = [expected_ap_brute_force([s for s, _ in items], [lab for _, lab in items])
               for items in lists if any(lab for _, lab in items)]
        expected = np.mean(per) if per else 0.0
        assert ListMetric(y, qid)(np.array(scores)) == pytest.approx(expected, abs=1e-9)


def separable(n_lists=40, size=6, seed=0):
    rng = np.random.default_rng(seed)
    X, y, qid = [], [], []
    for q in range(n_lists):
        pos = rng.integers(size)
        for k in range(size):
            signal = 1.0 if k == pos else rng.uniform(0, 0.8)
            X.append([signal, rng.normal()])
            y.append(int(k == pos))
            qid.append(q)
    return np.array(X), np.array(y), np.array(qid)


class TestCoordinateAscent:
    def test_single_separating_feature(self):
        X, y, qid = separable()
        model = CoordinateAscentRanker(n_restarts=2).fit(X[:, :1], y, qid)
        assert model.coef_[0] > 0
        assert model.score(X[:, :1], y, qid) == 1.0

    def test_all_zero_features(self):
        y = np.array([1, 0, 0, 0, 1, 0])
        qid = np.array([1, 1, 1, 2, 2, 2])
        X = np.zeros((6, 2))
        model = CoordinateAscentRanker(n_restarts=3).fit(X, y, qid)
        baseline = np.mean([expected_ap_brute_force([0, 0, 0], [1, 0, 0])] * 2)
        assert model.train_map_ == pytest.approx(baseline, abs=1e-12)

    def test_huge_epsilon_keeps_initial(self):
        X, y, qid = separable()
        model = CoordinateAscentRanker(n_restarts=4, epsilon=1e9, init_coef=[0.0, 1.0]).fit(X, y, qid)
        assert model.coef_.tolist() == [0.0, 1.0]
        assert model.n_iter_ == 0

    def test_deterministic(self):
        X, y, qid = separable(seed=4)
        a = CoordinateAscentRanker(n_restarts=3, random_state=9).fit(X, y, qid).coef_
        b = CoordinateAscentRanker(n_restarts=3, random_state=9).fit(X, y, qid).coef_
        assert np.array_equal(a, b)

    def test_beats_single_features_on_small_lists(self):
        rng = np.random.default_rng(11)
        X, y, qid = [], [], []
        for q in range(60):
            size = int(rng.integers(2, 7))
            pos = int(rng.integers(size))
            for k in range(size):
                a, b = rng.uniform(size=2)
                if k == pos:
                    a, b = a + 0.4, b + 0.4
                X.append([a, b, rng.uniform()])
                y.append(int(k == pos))
                qid.append(q)
        X, y, qid = np.array(X), np.array(y), np.array(qid)
        model = CoordinateAscentRanker(n_restarts=8).fit(X, y, qid)
        metric = ListMetric(y, qid)
        for j in range(X.shape[1]):
            assert model.train_map_ >= metric(X[:, j]) - 1e-12

    def test_rejects_unlabelled(self):
        with pytest.raises(ValueError):
            CoordinateAscentRanker().fit(np.zeros((2, 1)), [0, 0], [1, 1])
        with pytest.raises(ValueError):
            CoordinateAscentRanker(init_coef=[1.0]).fit(*separable())

    def test_clone(self):
        params = clone(CoordinateAscentRanker(n_restarts=3)).get_params()
        assert params["n_restarts"] == 3 and params["epsilon"] == 1e-5


class TestPairwiseHinge:
    def test_separable_no_violations(self):
        X, y, qid = separable()
        model = PairwiseHingeRanker(n_epochs=500).fit(X, y, qid)
        assert model.pair_violations_ == 0

    def test_heavy_regularization(self):
        X, y, qid = separable()
        model = PairwiseHingeRanker(reg=1e9).fit(X, y, qid)
        assert np.linalg.norm(model.coef_) < 1e-3

    def test_zero_epochs(self):
        X, y, qid = separable()
        assert PairwiseHingeRanker(n_epochs=0).fit(X, y, qid).coef_.tolist() == [0.0, 0.0]

    def test_loss_recorded(self):
        X, y, qid = separable()
        model = PairwiseHingeRanker(n_epochs=20).fit(X, y, qid)
        assert len(model.loss_curve_) == 20
        assert model.train_loss_ <= min(model.loss_curve_) + 1e-12

    def test_make_ranker(self):
        assert isinstance(make_ranker("pairwise_hinge", reg=0.5), PairwiseHingeRanker)
        with pytest.raises(ValueError):
            make_ranker("lambdamart")


def raw_model(weights, hash_="h"):
    return RankingModel(tuple(weights), hash_, "coordinate_ascent", {"normalization": "none"})


class TestScoreAndRank:
    def test_single_positive(self):
        out = score_and_rank(raw_model([1.0]), ["a", "b"], [[2.0], [-1.0]])
        assert out.entries == (("a", 2.0, 1.0),)

    def test_all_negative_keeps_top(self):
        out = score_and_rank(raw_model([1.0]), ["a", "b"], [[-3.0], [-1.0]])
        assert out.entries == (("b", -1.0, 1.0),)

    def test_weights_proportional(self):
        out = score_and_rank(raw_model([1.0]), ["a", "b", "c"], [[3.0], [1.0], [0.0]])
        assert out.words == ["a", "b", "c"]
        assert out.weights == pytest.approx([0.75, 0.25, 0.0])

    def test_all_zero_uniform(self):
        out = score_and_rank(raw_model([0.0]), ["a", "b"], [[1.0], [2.0]])
        assert out.weights == [0.5, 0.5]

    def test_minmax_applied_by_default(self):
        model = RankingModel((1.0,), "h", "coordinate_ascent")
        out = score_and_rank(model, ["a", "b", "c"], [[10.0], [20.0], [30.0]])
        assert out.weights == pytest.approx([2 / 3, 1 / 3, 0.0])

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(0.1, 10))
    def test_scaling_invariance(self, scores, c):
        words = [f"w{i}" for i in range(len(scores))]
        a = score_and_rank(raw_model([1.0]), words, [[s] for s in scores])
        b = score_and_rank(raw_model([c]), words, [[s] for s in scores])
        assert a.words == b.words
        assert a.weights == pytest.approx(b.weights, abs=1e-9)
        assert sum(a.weights) == pytest.approx(1.0)

    def test_does_not_mutate_input(self):
        X = np.array([[1.0], [5.0]])
        score_and_rank(RankingModel((1.0,), "h", "coordinate_ascent"), ["a", "b"], X)
        assert X.tolist() == [[1.0], [5.0]]

    def test_schema_checks(self):
        with pytest.raises(SchemaMismatchError):
            score_and_rank(raw_model([1.0]), ["a"], [[1.0]], schema_hash="other")
        with pytest.raises(SchemaMismatchError):
            score_and_rank(raw_model([1.0]), ["a"], [[1.0, 2.0]])


class TestTopN:
    RANKED = RankedCandidates(tuple((f"w{i}", 7 - i, (7 - i) / 28) for i in range(7)))

    def test_five_of_seven(self):
        out = top_n(self.RANKED, 5)
        assert out.words == ["w0", "w1", "w2", "w3", "w4"]
        assert out.weights == pytest.approx([7 / 25, 6 / 25, 5 / 25, 4 / 25, 3 / 25])

    def test_n_exceeds_length(self):
        assert top_n(self.RANKED, 10).weights == pytest.approx(list(self.RANKED.weights))

    def test_one(self):
        assert top_n(self.RANKED, 1).entries == (("w0", 7, 1.0),)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            top_n(self.RANKED, 0)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        X, y, qid = separable()
        model = CoordinateAscentRanker(n_restarts=1).fit(X, y, qid).to_model("abc123")
        model.save(tmp_path / "m.json")
        again = RankingModel.load(tmp_path / "m.json")
        assert again == model
        assert again.normalization == "list_minmax"

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            RankingModel((float("nan"),), "h", "coordinate_ascent")


def test_brute_force_orderings_exhaustive():
    # sanity check of the oracle itself on a tiny case
    perms = list(itertools.permutations([1, 0, 0]))
    assert expected_ap_brute_force([0, 0, 0], [1, 0, 0]) == pytest.approx(
        np.mean([1 / (p.index(1) + 1) for p in perms]))
