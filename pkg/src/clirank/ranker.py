"""Linear translation-candidate rankers and candidate-list scoring."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .features import SchemaMismatchError, normalize_list

GOLDEN = (math.sqrt(5) - 1) / 2


# -- list metric -------------------------------------------------------------


class ListMetric:
    """Expected average precision per candidate list under random tie-breaking.

    Precomputes the list structure of ``(y, qid)`` once so the metric of many
    score vectors can be evaluated cheaply. Lists without a positive label
    are ignored. When every remaining list has exactly one positive, average
    precision is the reciprocal rank and a sort-free path is used.
    """

    def __init__(self, y, qid):
        y = np.asarray(y)
        qid = np.asarray(qid)
        _, self.group = np.unique(qid, return_inverse=True)
        self.n_groups = int(self.group.max()) + 1 if len(qid) else 0
        self.rel = (y > 0).astype(np.float64)
        self.n_rel = np.bincount(self.group, weights=self.rel, minlength=self.n_groups)
        self.has_rel = self.n_rel > 0
        self.n_lists = int(self.has_rel.sum())
        sizes = np.bincount(self.group, minlength=self.n_groups)
        self._harmonic = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, sizes.max() + 2))]) if len(qid) else np.zeros(1)
        self.single = self.n_lists > 0 and np.all(self.n_rel[self.has_rel] == 1)
        if self.single:
            pos_rows = np.flatnonzero(self.rel > 0)
            self.pos_row = np.full(self.n_groups, -1)
            self.pos_row[self.group[pos_rows]] = pos_rows
            neg = (self.rel == 0) & self.has_rel[self.group]
            self.neg_rows = np.flatnonzero(neg)
            self.neg_group = self.group[self.neg_rows]

    def per_list(self, scores) -> np.ndarray:
        """Expected AP of each list that has a positive, in qid order."""
        scores = np.asarray(scores, dtype=np.float64)
        if self.n_lists == 0:
            return np.zeros(0)
        if self.single:
            pos_score = scores[self.pos_row[self.neg_group]]
            s = scores[self.neg_rows]
            g = np.bincount(self.neg_group, weights=(s > pos_score), minlength=self.n_groups)
            t = np.bincount(self.neg_group, weights=(s == pos_score), minlength=self.n_groups)
            g = g.astype(np.int64)[self.has_rel]
            t = t.astype(np.int64)[self.has_rel]
            H = self._harmonic
            return (H[g + t + 1] - H[g]) / (t + 1)
        return self._general(scores)

    def _general(self, scores):
        H = self._harmonic
        order = np.lexsort((-scores, self.group))
        grp, s, rel = self.group[order], scores[order], self.rel[order]
        n = len(order)
        list_start = np.r_[True, grp[1:] != grp[:-1]]
        tie_start = list_start | np.r_[True, s[1:] != s[:-1]]
        tie_id = np.cumsum(tie_start) - 1
        tie_first = np.flatnonzero(tie_start)
        tie_size = np.diff(np.r_[tie_first, n])
        tie_rel = np.add.reduceat(rel, tie_first)
        list_first = np.flatnonzero(list_start)
        list_of_row = np.cumsum(list_start) - 1
        # rows strictly above the tie group, and relevant among them
        g = tie_first[tie_id] - list_first[list_of_row]
        cum_rel = np.cumsum(rel) - rel
        r_above = cum_rel[tie_first[tie_id]] - cum_rel[list_first[list_of_row]]
        t = tie_size[tie_id]
        m = tie_rel[tie_id]
        h = H[g + t] - H[g]
        extra = np.where(t > 1, (m - 1) / np.maximum(t - 1, 1), 0.0) * (t - (g + 1) * h)
        exp_prec = ((r_above + 1) * h + extra) / t
        ap_sum = np.bincount(grp, weights=exp_prec * rel, minlength=self.n_groups)
        return (ap_sum / np.where(self.n_rel > 0, self.n_rel, 1))[self.has_rel]

    def __call__(self, scores) -> float:
        per = self.per_list(scores)
        return float(per.mean()) if per.size else 0.0


def mean_average_precision(scores, y, qid) -> float:
    return ListMetric(y, qid)(scores)


def _check_lists(X, y, qid):
    X = check_array(X, dtype=np.float64)
    y = np.asarray(y)
    qid = np.asarray(qid)
    if len(y) != X.shape[0] or len(qid) != X.shape[0]:
        raise ValueError("X, y and qid must have the same number of rows")
    if not np.any(y > 0):
        raise ValueError("training data has no positive labels")
    if not np.any(y <= 0):
        raise ValueError("training data has no negative labels")
    return X, y, qid


# -- model file --------------------------------------------------------------


@dataclass(frozen=True)
class RankingModel:
    weights: tuple
    schema_hash: str
    trainer: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not all(math.isfinite(w) for w in self.weights):
            raise ValueError("model weights must be finite")

    @property
    def normalization(self) -> str:
        return self.meta.get("normalization", "list_minmax")

    def to_json(self) -> dict:
        return {
            "schema_hash": self.schema_hash,
            "trainer": self.trainer,
            "weights": list(self.weights),
            "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RankingModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple(float(w) for w in obj["weights"]), obj["schema_hash"], obj["trainer"], obj.get("meta", {}))


class _LinearRanker(BaseEstimator):
    trainer_tag = "linear"

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_

    def score(self, X, y, qid):
        return mean_average_precision(self.predict(X), y, qid)

    def to_model(self, schema_hash, normalization="list_minmax", **meta) -> RankingModel:
        check_is_fitted(self, "coef_")
        # json round trip so a saved and reloaded model compares equal
        params = json.loads(json.dumps(
            {k: (v.tolist() if hasattr(v, "tolist") else v) for k, v in self.get_params().items()}))
        info = {"normalization": normalization, "params": params, **self._meta(), **meta}
        return RankingModel(tuple(float(w) for w in self.coef_), schema_hash, self.trainer_tag, info)

    def _meta(self):
        return {}


# -- coordinate ascent -------------------------------------------------------


class CoordinateAscentRanker(_LinearRanker):
    """Linear ranker trained by cyclic coordinate ascent on list MAP.

    Each coordinate is line-searched over ``bounds``: a uniform grid of
    ``n_grid`` points locates the best bracket, then golden-section search
    refines inside it. A step is accepted only when it raises the training
    metric by more than ``epsilon``. Restart 0 begins at ``init_coef`` when
    given, otherwise at the best of the uniform vector and every unit
    vector; later restarts start at seeded random points and replace the
    incumbent only when they beat it by more than ``epsilon``.
    """

    trainer_tag = "coordinate_ascent"

    def __init__(self, n_restarts=8, epsilon=1e-5, bounds=(-10.0, 10.0), n_grid=21,
                 golden_steps=12, max_cycles=10, init_coef=None, random_state=0):
        self.n_restarts = n_restarts
        self.epsilon = epsilon
        self.bounds = bounds
        self.n_grid = n_grid
        self.golden_steps = golden_steps
        self.max_cycles = max_cycles
        self.init_coef = init_coef
        self.random_state = random_state

    def fit(self, X, y, qid):
        X, y, qid = _check_lists(X, y, qid)
        metric = ListMetric(y, qid)
        d = X.shape[1]
        rng = check_random_state(self.random_state)

        if self.init_coef is not None:
            start = np.asarray(self.init_coef, dtype=np.float64).copy()
            if start.shape != (d,):
                raise ValueError("init_coef has the wrong length")
        else:
            options = [np.full(d, 1.0 / d)] + list(np.eye(d))
            values = [metric(X @ w) for w in options]
            start = options[int(np.argmax(values))].copy()
        self.initial_coef_ = start.copy()

        best_w, best_val = start.copy(), metric(X @ start)
        self.trajectories_ = []
        self.n_iter_ = 0
        for r in range(max(1, self.n_restarts)):
            w0 = start.copy() if r == 0 else rng.uniform(-1.0, 1.0, d)
            w, val, traj = self._ascend(X, metric, w0, rng)
            self.trajectories_.append(traj)
            if (r == 0 and val >= best_val) or val > best_val + self.epsilon:
                best_w, best_val = w, val
        self.coef_ = best_w
        self.train_map_ = best_val
        return self

    def _ascend(self, X, metric, w, rng):
        s = X @ w
        cur = metric(s)
        traj = [cur]
        lo, hi = self.bounds
        for _ in range(self.max_cycles):
            improved = False
            for j in rng.permutation(X.shape[1]):
                col = X[:, j]
                if not col.any():
                    continue
                base = s - w[j] * col

                def f(v):
                    return metric(base + v * col)

                v, val = self._line_search(f, lo, hi, w[j], cur)
                if val > cur + self.epsilon:
                    w[j] = v
                    s = base + v * col
                    cur = val
                    traj.append(cur)
                    improved = True
                    self.n_iter_ += 1
            if not improved:
                break
        return w, cur, traj

    def _line_search(self, f, lo, hi, current, current_val):
        grid = np.linspace(lo, hi, self.n_grid)
        vals = [f(v) for v in grid]
        k = int(np.argmax(vals))
        best_v, best_val = (current, current_val) if current_val >= vals[k] else (grid[k], vals[k])
        a = grid[max(k - 1, 0)]
        b = grid[min(k + 1, len(grid) - 1)]
        c = b - GOLDEN * (b - a)
        e = a + GOLDEN * (b - a)
        fc, fe = f(c), f(e)
        for _ in range(self.golden_steps):
            for v, fv in ((c, fc), (e, fe)):
                if fv > best_val:
                    best_v, best_val = v, fv
            if fc >= fe:
                b, e, fe = e, c, fc
                c = b - GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, e, fe
                e = a + GOLDEN * (b - a)
                fe = f(e)
        for v, fv in ((c, fc), (e, fe)):
            if fv > best_val:
                best_v, best_val = v, fv
        return float(best_v), float(best_val)

    def _meta(self):
        return {"train_map": self.train_map_, "iterations": self.n_iter_}


# -- pairwise hinge ----------------------------------------------------------


def _pair_differences(X, y, qid):
    diffs, weights = [], []
    n_lists = 0
    for q in np.unique(qid):
        rows = np.flatnonzero(qid == q)
        pos = rows[y[rows] > 0]
        neg = rows[y[rows] <= 0]
        if len(pos) == 0 or len(neg) == 0:
            continue
        n_lists += 1
        d = (X[pos][:, None, :] - X[neg][None, :, :]).reshape(-1, X.shape[1])
        diffs.append(d)
        weights.append(np.full(len(d), 1.0 / len(d)))
    if not diffs:
        return np.zeros((0, X.shape[1])), np.zeros(0), 0
    return np.vstack(diffs), np.concatenate(weights), n_lists


class PairwiseHingeRanker(_LinearRanker):
    """Linear ranker fit by subgradient descent on a pairwise hinge loss.

    Objective: mean over lists of the pair-averaged ``max(0, 1 - w.(x+ - x-))``
    plus ``reg / 2 * ||w||^2``. Each full-batch step applies the L2 term
    implicitly, ``w <- (w - lr * g) / (1 + lr * reg)``, which stays stable
    for any ``reg``. The iterate with the lowest objective is kept.
    """

    trainer_tag = "pairwise_hinge"

    def __init__(self, learning_rate=0.1, n_epochs=300, reg=1e-4, random_state=0):
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.reg = reg
        self.random_state = random_state

    def _objective(self, D, pw, n_lists, w):
        margins = 1.0 - D @ w
        return float(pw @ np.maximum(margins, 0.0)) / n_lists + 0.5 * self.reg * float(w @ w), margins

    def fit(self, X, y, qid):
        X, y, qid = _check_lists(X, y, qid)
        D, pw, n_lists = _pair_differences(X, y, qid)
        w = np.zeros(X.shape[1])
        self.loss_curve_ = []
        if n_lists == 0:
            raise ValueError("no list has both a positive and a negative candidate")
        best_w, (best_obj, margins) = w.copy(), self._objective(D, pw, n_lists, w)
        for epoch in range(self.n_epochs):
            active = margins > 0
            g = -(pw[active] @ D[active]) / n_lists
            lr = self.learning_rate / math.sqrt(1.0 + epoch)
            w = (w - lr * g) / (1.0 + lr * self.reg)
            obj, margins = self._objective(D, pw, n_lists, w)
            if not math.isfinite(obj):
                raise FloatingPointError(
                    f"pairwise hinge loss became non-finite at epoch {epoch} "
                    f"(learning_rate={self.learning_rate}, reg={self.reg}, |w|={np.linalg.norm(w):.3g})"
                )
            self.loss_curve_.append(obj)
            if obj < best_obj:
                best_w, best_obj = w.copy(), obj
        self.coef_ = best_w
        self.train_loss_ = best_obj
        self.pair_violations_ = int(np.sum(D @ best_w <= 0))
        self.train_map_ = mean_average_precision(X @ best_w, y, qid)
        return self

    def _meta(self):
        return {"train_map": self.train_map_, "train_loss": self.train_loss_,
                "iterations": self.n_epochs}


TRAINERS = {
    "coordinate_ascent": CoordinateAscentRanker,
    "pairwise_hinge": PairwiseHingeRanker,
}


def make_ranker(trainer, **params):
    try:
        return TRAINERS[trainer](**params)
    except KeyError:
        raise ValueError(f"unknown trainer {trainer!r}; choose from {sorted(TRAINERS)}") from None


# -- applying a model --------------------------------------------------------


@dataclass(frozen=True)
class RankedCandidates:
    entries: tuple  # (word, raw score, normalized weight)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def words(self):
        return [w for w, _, _ in self.entries]

    @property
    def weights(self):
        return [p for _, _, p in self.entries]

    @classmethod
    def from_lexicon(cls, entries) -> "RankedCandidates":
        """Treat a lexicon's ``(word, p)`` list as already ranked, weights = p."""
        return cls(tuple((w, p, p) for w, p in entries))


def _normalized(raw):
    total = math.fsum(raw)
    if total > 0:
        return [r / total for r in raw]
    return [1.0 / len(raw)] * len(raw)


def score_and_rank(model: RankingModel, words, vectors, schema_hash=None) -> RankedCandidates:
    """Score candidates with the linear model, drop negative scores, sum-normalize the rest.

    If every score is negative the single top candidate is kept with weight 1.
    Retained candidates that all score exactly zero share the mass uniformly.
    """
    if schema_hash is not None and schema_hash != model.schema_hash:
        raise SchemaMismatchError(f"model schema {model.schema_hash} != features schema {schema_hash}")
    X = np.asarray(vectors, dtype=np.float64)
    if len(words) == 0:
        return RankedCandidates(())
    if X.shape != (len(words), len(model.weights)):
        raise SchemaMismatchError(
            f"expected {len(words)} x {len(model.weights)} feature matrix, got {X.shape}"
        )
    if model.normalization == "list_minmax":
        X = normalize_list(X)
    raw = X @ np.asarray(model.weights)
    order = sorted(range(len(words)), key=lambda i: (-raw[i], words[i]))
    kept = [i for i in order if raw[i] >= 0] or order[:1]
    if raw[kept[0]] < 0:
        return RankedCandidates(((words[kept[0]], float(raw[kept[0]]), 1.0),))
    weights = _normalized([float(raw[i]) for i in kept])
    return RankedCandidates(tuple((words[i], float(raw[i]), w) for i, w in zip(kept, weights)))


def top_n(ranked: RankedCandidates, n) -> RankedCandidates:
    if n < 1:
        raise ValueError("n must be >= 1")
    head = ranked.entries[:n]
    if not head:
        return ranked
    weights = _normalized([w for _, _, w in head])
    return RankedCandidates(tuple((word, raw, w) for (word, raw, _), w in zip(head, weights)))
