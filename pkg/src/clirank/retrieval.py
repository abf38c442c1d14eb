"""Okapi BM25 over an inverted index, weighted translated queries, and IR evaluation."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats as sps
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import CorpusFormatError
from .ranker import RankedCandidates, top_n

SIGNIFICANCE_LEVEL = 0.005


@dataclass(frozen=True)
class InvertedIndex:
    postings: Mapping[str, tuple]  # term -> ((doc id, tf), ...) sorted by doc id
    doc_len: Mapping[str, int]
    N: int
    avg_doc_len: float

    def df(self, term) -> int:
        return len(self.postings.get(term, ()))

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "avg_doc_len": self.avg_doc_len,
            "doc_len": dict(self.doc_len),
            "postings": {t: [list(p) for p in ps] for t, ps in self.postings.items()},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        postings = {t: tuple((d, int(tf)) for d, tf in ps) for t, ps in sorted(obj["postings"].items())}
        return cls(postings, dict(sorted(obj["doc_len"].items())), int(obj["N"]), float(obj["avg_doc_len"]))


def build_index(docs) -> InvertedIndex:
    """Index ``{doc id: tokens}`` or an iterable of ``(doc id, tokens)``."""
    items = list(docs.items()) if isinstance(docs, Mapping) else list(docs)
    if not items:
        raise ValueError("cannot index an empty collection")
    seen = set()
    for doc_id, _ in items:
        if doc_id in seen:
            raise ValueError(f"duplicate document id {doc_id!r}")
        seen.add(doc_id)
    items.sort(key=lambda kv: kv[0])
    postings = defaultdict(list)
    doc_len = {}
    for doc_id, tokens in items:
        doc_len[doc_id] = len(tokens)
        for term, tf in sorted(Counter(tokens).items()):
            postings[term].append((doc_id, tf))
    return InvertedIndex(
        {t: tuple(ps) for t, ps in sorted(postings.items())},
        doc_len,
        len(items),
        sum(doc_len.values()) / len(items),
    )


@dataclass(frozen=True)
class WeightedQuery:
    terms: tuple  # (term, weight)
    oov: tuple = ()

    def __post_init__(self):
        for term, w in self.terms:
            if not w > 0:
                raise ValueError(f"query term {term!r} has non-positive weight {w}")
        if len({t for t, _ in self.terms}) != len(self.terms):
            raise ValueError("duplicate query terms; build with WeightedQuery.from_terms")

    @classmethod
    def from_terms(cls, terms, oov=()) -> "WeightedQuery":
        """Merge repeated terms by summing their weights (first-seen order)."""
        merged: dict = {}
        for term, w in terms:
            merged[term] = merged.get(term, 0.0) + w
        return cls(tuple(merged.items()), tuple(oov))

    def unweighted(self) -> "WeightedQuery":
        return WeightedQuery(tuple((t, 1.0) for t, _ in self.terms), self.oov)


def bm25_idf(N, df) -> float:
    return math.log((N - df + 0.5) / (df + 0.5) + 1.0)


def bm25_search(index: InvertedIndex, query: WeightedQuery, k=1000, k1=1.2, b=0.75, weighted=True):
    """Rank documents matching at least one query term; returns ``[(doc id, score)]``.

    Ties are broken by ascending doc id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict = defaultdict(float)
    for term, weight in query.terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        w = weight if weighted else 1.0
        idf = bm25_idf(index.N, len(plist))
        for doc_id, tf in plist:
            norm = k1 * (1.0 - b + b * index.doc_len[doc_id] / index.avg_doc_len)
            scores[doc_id] += w * idf * tf * (k1 + 1.0) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


class BM25Retriever(BaseEstimator):
    """BM25 search as an estimator: ``fit`` builds the index over ``{doc id: tokens}``."""

    def __init__(self, k1=1.2, b=0.75, weighted=True):
        self.k1 = k1
        self.b = b
        self.weighted = weighted

    def fit(self, docs, y=None):
        self.index_ = build_index(docs)
        return self

    def search(self, query: WeightedQuery, k=1000):
        check_is_fitted(self, "index_")
        return bm25_search(self.index_, query, k=k, k1=self.k1, b=self.b, weighted=self.weighted)

    def predict(self, queries, k=1000):
        """Run ``{qid: WeightedQuery}`` and return ``{qid: [(doc id, score)]}``."""
        return {qid: self.search(q, k) for qid, q in queries.items()}


def construct_query(words, candidates: Mapping[str, RankedCandidates], n=5, weighted=True) -> WeightedQuery:
    """Concatenate the top ``n`` translations of each query word.

    Words without candidates keep their verbatim token (weight 1) and are
    recorded in ``oov``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    terms, oov = [], []
    for word in words:
        ranked = candidates.get(word)
        if ranked is None or len(ranked) == 0:
            terms.append((word, 1.0))
            oov.append(word)
            continue
        for term, _, w in top_n(ranked, n):
            if not weighted:
                terms.append((term, 1.0))
            elif w > 0:
                terms.append((term, w))
    return WeightedQuery.from_terms(terms, oov)


# -- evaluation --------------------------------------------------------------


@dataclass
class EvalResult:
    ap: dict
    map: float
    p5: float
    p10: float
    oov: int = 0
    excluded: int = 0
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "map": self.map,
            "p@5": self.p5,
            "p@10": self.p10,
            "oov": self.oov,
            "excluded_queries": self.excluded,
            "per_query_ap": self.ap,
            "meta": self.meta,
        }


def average_precision(ranked_docs, relevant) -> float:
    if not relevant:
        return 0.0
    hits, total = 0, 0.0
    for rank, doc in enumerate(ranked_docs, 1):
        if doc in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def precision_at(ranked_docs, relevant, k) -> float:
    return sum(1 for doc in list(ranked_docs)[:k] if doc in relevant) / k


def _doc_ids(ranked):
    return [d[0] if isinstance(d, (tuple, list)) else d for d in ranked]


def evaluate(run: Mapping, qrels: Mapping, oov=0, meta=None) -> EvalResult:
    """MAP, P@5 and P@10 over the run's queries.

    ``run`` maps qid to a ranked list of doc ids (or ``(doc id, score)``);
    ``qrels`` maps qid to ``{doc id: relevance}``. Queries with no relevant
    document are left out and counted in ``excluded``.
    """
    missing = sorted(set(run) - set(qrels))
    if missing:
        raise ValueError(f"run has queries without judgments: {missing[:5]}")
    ap, p5, p10 = {}, [], []
    excluded = 0
    for qid in sorted(run):
        relevant = {d for d, rel in qrels[qid].items() if rel > 0}
        if not relevant:
            excluded += 1
            continue
        docs = _doc_ids(run[qid])
        ap[qid] = average_precision(docs, relevant)
        p5.append(precision_at(docs, relevant, 5))
        p10.append(precision_at(docs, relevant, 10))
    n = len(ap)
    return EvalResult(
        ap=ap,
        map=math.fsum(ap.values()) / n if n else 0.0,
        p5=math.fsum(p5) / n if n else 0.0,
        p10=math.fsum(p10) / n if n else 0.0,
        oov=oov,
        excluded=excluded,
        meta=dict(meta or {}),
    )


def paired_ttest(ap_a, ap_b):
    """Paired two-sided t-test on per-query values; returns ``(t, df, p)``."""
    a = np.asarray(ap_a, dtype=np.float64)
    b = np.asarray(ap_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("paired_ttest needs two equal-length sequences of at least 2 values")
    diff = a - b
    if np.all(diff == 0):
        raise ValueError("degenerate: all paired differences are zero")
    n = len(diff)
    sd = float(np.std(diff, ddof=1))
    mean = float(np.mean(diff))
    if sd == 0:
        t = math.copysign(math.inf, mean)
        return t, n - 1, 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(sps.t.sf(abs(t), n - 1))
    return t, n - 1, p


# -- TREC files --------------------------------------------------------------


def read_qrels(path) -> dict:
    """Read ``qid 0 docid rel`` lines."""
    qrels: dict = defaultdict(dict)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise CorpusFormatError(path, lineno, "expected 'qid 0 docid rel'")
            qid, _, doc, rel = parts
            try:
                qrels[qid][doc] = int(rel)
            except ValueError:
                raise CorpusFormatError(path, lineno, f"relevance {rel!r} is not an integer") from None
    return dict(qrels)


def write_qrels(qrels: Mapping, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for qid in sorted(qrels):
            for doc in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {doc} {qrels[qid][doc]}\n")


def write_run(run: Mapping, path, tag="clirank") -> None:
    """Write ``qid Q0 docid rank score tag`` lines."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for qid in sorted(run):
            for rank, (doc, score) in enumerate(run[qid], 1):
                fh.write(f"{qid} Q0 {doc} {rank} {score:.10f} {tag}\n")


def read_run(path) -> dict:
    rows: dict = defaultdict(list)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise CorpusFormatError(path, lineno, "expected 'qid Q0 docid rank score tag'")
            try:
                rows[parts[0]].append((int(parts[3]), parts[2], float(parts[4])))
            except ValueError:
                raise CorpusFormatError(path, lineno, "rank must be an integer and score a number") from None
    return {qid: [(doc, score) for _, doc, score in sorted(r)] for qid, r in rows.items()}


def read_topics(path) -> dict:
    """Read ``qid<TAB>title`` lines into ``{qid: title}``."""
    topics = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusFormatError(path, lineno, "expected qid<TAB>title")
            qid, title = line.split("\t", 1)
            topics[qid] = title
    return topics


def write_topics(topics: Mapping, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for qid in sorted(topics):
            fh.write(f"{qid}\t{topics[qid]}\n")


def write_queries(queries: Mapping, path) -> None:
    """Translated-query stage file: ``qid<TAB>term<TAB>weight`` lines."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for qid in sorted(queries):
            for term, w in queries[qid].terms:
                fh.write(f"{qid}\t{term}\t{w!r}\n")
            for word in queries[qid].oov:
                fh.write(f"#oov\t{qid}\t{word}\n")


def read_queries(path) -> dict:
    terms: dict = defaultdict(list)
    oov: dict = defaultdict(list)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if not line.strip():
                continue
            if parts[0] == "#oov" and len(parts) == 3:
                oov[parts[1]].append(parts[2])
                terms.setdefault(parts[1], [])
                continue
            if len(parts) != 3:
                raise CorpusFormatError(path, lineno, "expected qid<TAB>term<TAB>weight")
            terms[parts[0]].append((parts[1], float(parts[2])))
    return {qid: WeightedQuery.from_terms(t, oov.get(qid, ())) for qid, t in terms.items()}
