"""Translation-relation and context features for (source word, candidate) pairs."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .corpus import ComparableCorpus, CorpusStats, SentencePairCorpus, compute_stats
from .lexicon import Lexicon

SCHEMA_VERSION = "clirank-features-1"

RELATION_FEATURES = (
    "prob", "revprob", "rank", "probdiff", "ent_tgt", "ent_src", "n_relevant", "present",
)
CORPUS_FEATURES = (
    "tf_src", "tf_tgt", "idf_src", "idf_tgt", "pmi_src", "pmi_tgt", "clpmi_s2t", "clpmi_t2s",
)
GLOBAL = "*"


class SchemaMismatchError(ValueError):
    pass


# -- counting-based scores -------------------------------------------------


def pmi(stats: CorpusStats, w1, w2) -> float:
    """Document-level PMI; 0 when any of the three counts is zero."""
    n12 = stats.cooccurrence(w1, w2)
    n1 = stats.df.get(w1, 0)
    n2 = stats.df.get(w2, 0)
    if n12 == 0 or n1 == 0 or n2 == 0:
        return 0.0
    return math.log(n12 * stats.doc_count / (n1 * n2))


def context_score(stats: CorpusStats, word, sentence) -> float:
    return math.fsum(pmi(stats, word, w) for w in sorted(set(sentence)) if w != word)


@dataclass(frozen=True)
class CrossStats:
    """Counts over aligned document pairs (one sentence pair = one alignment)."""

    n_alignments: int
    src_df: dict
    tgt_df: dict
    mutual: dict = field(repr=False)

    @classmethod
    def from_corpus(cls, corpus) -> "CrossStats":
        if isinstance(corpus, ComparableCorpus):
            aligned = [(s, t) for s, t, _ in corpus.aligned_pairs()]
        else:
            aligned = list(getattr(corpus, "pairs", corpus))
        src_df: Counter = Counter()
        tgt_df: Counter = Counter()
        mutual: Counter = Counter()
        for src, tgt in aligned:
            sv, tv = sorted(set(src)), sorted(set(tgt))
            src_df.update(sv)
            tgt_df.update(tv)
            mutual.update((s, t) for s in sv for t in tv)
        return cls(len(aligned), dict(src_df), dict(tgt_df), dict(mutual))

    def reversed(self) -> "CrossStats":
        return CrossStats(
            self.n_alignments, self.tgt_df, self.src_df, {(t, s): c for (s, t), c in self.mutual.items()}
        )


def _as_cross(corpus) -> CrossStats:
    return corpus if isinstance(corpus, CrossStats) else CrossStats.from_corpus(corpus)


def clpmi(corpus, w_s, w_t) -> float:
    """Cross-lingual PMI over alignments; ``corpus`` may be prebuilt :class:`CrossStats`."""
    cross = _as_cross(corpus)
    n12 = cross.mutual.get((w_s, w_t), 0)
    ns = cross.src_df.get(w_s, 0)
    nt = cross.tgt_df.get(w_t, 0)
    if n12 == 0 or ns == 0 or nt == 0:
        return 0.0
    return math.log(n12 * cross.n_alignments / (ns * nt))


def cross_context_score(corpus, word, opposite_sentence, reverse=False) -> float:
    """Sum of CLPMI between ``word`` and each distinct word of the other-language sentence.

    With ``reverse`` the word is target-language and the sentence source-language.
    """
    cross = _as_cross(corpus)
    words = sorted(set(opposite_sentence))
    if reverse:
        return math.fsum(clpmi(cross, w, word) for w in words)
    return math.fsum(clpmi(cross, word, w) for w in words)


def entropy(probs) -> float:
    return -math.fsum(p * math.log(p) for p in probs if p > 0)


# -- resources and schema ----------------------------------------------------


@dataclass
class TranslationResource:
    """Everything the features need from one translation resource.

    Corpus resources (``parallel``, ``comparable``) carry monolingual
    statistics for both sides and cross-lingual alignment counts; a
    ``dictionary`` carries only its two lexicons.
    """

    resource_id: str
    kind: str
    s2t: Lexicon
    t2s: Lexicon
    src_stats: CorpusStats | None = None
    tgt_stats: CorpusStats | None = None
    cross: CrossStats | None = None

    _entropy_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def has_corpus(self) -> bool:
        return self.kind != "dictionary"

    def entropy_s2t(self, target) -> float:
        """Entropy of ``target`` over the source words whose lists contain it."""
        key = ("s2t", target)
        if key not in self._entropy_cache:
            self._entropy_cache[key] = entropy(p for _, p in self.s2t.givers(target))
        return self._entropy_cache[key]

    def entropy_t2s(self, source) -> float:
        key = ("t2s", source)
        if key not in self._entropy_cache:
            self._entropy_cache[key] = entropy(p for _, p in self.t2s.givers(source))
        return self._entropy_cache[key]

    @classmethod
    def from_parallel(cls, corpus: SentencePairCorpus, s2t, t2s, resource_id=None):
        return cls(
            resource_id or s2t.resource_id, "parallel", s2t, t2s,
            compute_stats(corpus.source_docs()), compute_stats(corpus.target_docs()),
            CrossStats.from_corpus(corpus),
        )

    @classmethod
    def from_comparable(cls, corpus: ComparableCorpus, s2t, t2s, resource_id=None):
        src_docs = [corpus.src_docs[k] for k in sorted(corpus.src_docs)]
        tgt_docs = [corpus.tgt_docs[k] for k in sorted(corpus.tgt_docs)]
        return cls(
            resource_id or s2t.resource_id, "comparable", s2t, t2s,
            compute_stats(src_docs), compute_stats(tgt_docs), CrossStats.from_corpus(corpus),
        )

    @classmethod
    def from_dictionary(cls, s2t, t2s, resource_id=None):
        return cls(resource_id or s2t.resource_id, "dictionary", s2t, t2s)


@dataclass(frozen=True)
class FeatureSchema:
    slots: tuple  # (feature name, resource id)
    version: str = SCHEMA_VERSION

    def __post_init__(self):
        if len(set(self.slots)) != len(self.slots):
            raise ValueError("feature slots must be unique")

    def __len__(self):
        return len(self.slots)

    @property
    def names(self) -> list:
        return [name if rid == GLOBAL else f"{name}_{rid}" for name, rid in self.slots]

    @property
    def hash(self) -> str:
        payload = json.dumps({"version": self.version, "slots": self.slots}, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def index(self, name) -> int:
        return self.names.index(name)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "hash": self.hash,
            "slots": [
                {"index": i, "name": n, "resource": r} for i, (n, r) in enumerate(self.slots)
            ],
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, obj) -> "FeatureSchema":
        try:
            slots = tuple((s["name"], s["resource"]) for s in sorted(obj["slots"], key=lambda s: s["index"]))
        except (KeyError, TypeError) as exc:
            raise SchemaMismatchError(f"malformed schema manifest: missing {exc}") from None
        schema = cls(slots, obj.get("version", SCHEMA_VERSION))
        if "hash" in obj and obj["hash"] != schema.hash:
            raise SchemaMismatchError("schema manifest hash does not match its slots")
        return schema

    @classmethod
    def read(cls, path) -> "FeatureSchema":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_schema(resources: Sequence[TranslationResource]) -> FeatureSchema:
    slots = []
    for res in resources:
        slots.extend((name, res.resource_id) for name in RELATION_FEATURES)
        if res.has_corpus:
            slots.extend((name, res.resource_id) for name in CORPUS_FEATURES)
    slots.append(("n_relevant", GLOBAL))
    return FeatureSchema(tuple(slots))


@dataclass(frozen=True)
class ContextSpec:
    source_sentence: tuple
    target_sentence: tuple = ()

    def __post_init__(self):
        if not self.source_sentence:
            raise ValueError("source context must be non-empty")


def _idf(stats: CorpusStats, word) -> float:
    df = stats.df.get(word, 0)
    return math.log(stats.doc_count / df) if df else 0.0


def _source_values(res: TranslationResource, src, context: ContextSpec) -> dict:
    values = {"ent_src": res.entropy_t2s(src)}
    if res.has_corpus:
        values["tf_src"] = float(res.src_stats.tf.get(src, 0))
        values["idf_src"] = _idf(res.src_stats, src)
        values["pmi_src"] = context_score(res.src_stats, src, context.source_sentence)
        values["clpmi_s2t"] = cross_context_score(res.cross, src, context.target_sentence)
    return values


def _candidate_values(res: TranslationResource, src, cand, context: ContextSpec, source_words) -> dict:
    values = {"prob": 0.0, "rank": 0.0, "probdiff": 0.0, "present": 0.0}
    prob = res.s2t.prob(src, cand)
    if prob > 0:
        values["prob"] = prob
        values["rank"] = float(res.s2t.rank(src, cand))
        values["probdiff"] = res.s2t.max_prob(src) - prob
        values["present"] = 1.0
    values["revprob"] = res.t2s.prob(cand, src)
    values["ent_tgt"] = res.entropy_s2t(cand)
    values["n_relevant"] = float(sum(1 for w in source_words if res.s2t.has_relation(w, cand)))
    if res.has_corpus:
        values["tf_tgt"] = float(res.tgt_stats.tf.get(cand, 0))
        values["idf_tgt"] = _idf(res.tgt_stats, cand)
        values["pmi_tgt"] = context_score(res.tgt_stats, cand, context.target_sentence)
        values["clpmi_t2s"] = cross_context_score(
            res.cross, cand, context.source_sentence, reverse=True
        )
    return values


def _check_schema(resources, schema):
    expected = build_schema(resources)
    if expected.slots != schema.slots or expected.version != schema.version:
        raise SchemaMismatchError(
            f"schema {schema.hash} does not match the resource configuration ({expected.hash})"
        )


def extract_matrix(src_word, candidates, context: ContextSpec, resources, schema: FeatureSchema,
                   _checked=False) -> np.ndarray:
    """Feature rows for every candidate of one source-word occurrence.

    Source-side features are computed once and shared by all rows.
    """
    if not _checked:
        _check_schema(resources, schema)
    source_words = sorted(set(context.source_sentence))
    shared = {res.resource_id: _source_values(res, src_word, context) for res in resources}
    out = np.empty((len(candidates), len(schema)), dtype=np.float64)
    for row, cand in enumerate(candidates):
        values = {
            res.resource_id: {**shared[res.resource_id],
                              **_candidate_values(res, src_word, cand, context, source_words)}
            for res in resources
        }
        pooled = sum(
            1 for w in source_words if any(res.s2t.has_relation(w, cand) for res in resources)
        )
        for i, (name, rid) in enumerate(schema.slots):
            out[row, i] = float(pooled) if rid == GLOBAL else values[rid][name]
    return out


def extract_vector(src_word, candidate, context: ContextSpec, resources, schema: FeatureSchema) -> np.ndarray:
    """Fill every schema slot for one (source word, candidate) pair."""
    return extract_matrix(src_word, [candidate], context, resources, schema)[0]


def normalize_list(vectors) -> np.ndarray:
    """Min-max scale each slot to [0, 1] within one candidate list; constant slots become 0."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("normalize_list expects a non-empty 2-D array")
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    out = np.zeros_like(X)
    varying = span > 0
    out[:, varying] = (X[:, varying] - lo[varying]) / span[varying]
    return out


def normalize_lists(X, qid) -> np.ndarray:
    """Apply :func:`normalize_list` to each run of rows sharing a qid."""
    X = np.asarray(X, dtype=np.float64)
    qid = np.asarray(qid)
    out = np.empty_like(X)
    for q in np.unique(qid):
        rows = qid == q
        out[rows] = normalize_list(X[rows])
    return out


class CandidateFeaturizer(BaseEstimator, TransformerMixin):
    """Turn ``(source word, candidate, ContextSpec)`` triples into a feature matrix.

    ``fit`` only fixes the schema for ``resources``; ``transform`` returns
    raw (unnormalized) vectors, one row per triple.
    """

    def __init__(self, resources=()):
        self.resources = resources

    def fit(self, X=None, y=None):
        self.schema_ = build_schema(self.resources)
        return self

    def transform(self, X):
        check_is_fitted(self, "schema_")
        rows = [
            extract_matrix(src, [cand], ctx, self.resources, self.schema_, _checked=True)
            for src, cand, ctx in X
        ]
        if not rows:
            return np.zeros((0, len(self.schema_)))
        out = np.vstack(rows)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite feature value")
        return out
