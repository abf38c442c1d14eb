"""Probabilistic bilingual lexicons and the resources that produce them.

A :class:`Lexicon` maps a *given* word to its translations sorted by
descending probability. Direction ``s2t`` means keys are source-language
words; ``t2s`` lexicons are keyed by target-language words.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import BilingualDictionary, ComparableCorpus, SentencePairCorpus

NULL_TOKEN = "NULL"  # the tokenizer casefolds, so no real token can collide
PROB_FLOOR = 1e-12
DIRECTIONS = ("s2t", "t2s")


def _sorted_entries(dist: Mapping[str, float]) -> tuple:
    return tuple(sorted(dist.items(), key=lambda kv: (-kv[1], kv[0])))


@dataclass(frozen=True)
class Lexicon:
    resource_id: str
    direction: str
    table: Mapping[str, tuple]

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    @classmethod
    def from_distributions(cls, resource_id, direction, dists: Mapping[str, Mapping[str, float]]):
        table = {w: _sorted_entries(d) for w, d in sorted(dists.items()) if d}
        return cls(resource_id, direction, table)

    @cached_property
    def _lookup(self) -> dict:
        return {w: dict(entries) for w, entries in self.table.items()}

    @cached_property
    def _inverse(self) -> dict:
        inv = defaultdict(list)
        for w, entries in self.table.items():
            for t, p in entries:
                inv[t].append((w, p))
        return dict(inv)

    def __contains__(self, word) -> bool:
        return word in self.table

    def __len__(self) -> int:
        return len(self.table)

    def translations(self, word, top_k=None) -> tuple:
        entries = self.table.get(word, ())
        return entries if top_k is None else entries[:top_k]

    def prob(self, word, translation) -> float:
        return self._lookup.get(word, {}).get(translation, 0.0)

    def rank(self, word, translation) -> int:
        """1-based rank of ``translation`` in the list of ``word``; 0 if absent."""
        for k, (t, _) in enumerate(self.table.get(word, ()), 1):
            if t == translation:
                return k
        return 0

    def max_prob(self, word) -> float:
        entries = self.table.get(word)
        return entries[0][1] if entries else 0.0

    def givers(self, translation) -> list:
        """All ``(word, p)`` whose list contains ``translation``."""
        return self._inverse.get(translation, [])

    def has_relation(self, word, translation) -> bool:
        return translation in self._lookup.get(word, ())

    def write(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#lexicon resource={self.resource_id} direction={self.direction}\n")
            for w, entries in self.table.items():
                for t, p in entries:
                    fh.write(f"{w}\t{t}\t{p:.17g}\n")

    @classmethod
    def read(cls, path) -> "Lexicon":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("#lexicon"):
                raise ValueError(f"{path}:1: missing '#lexicon' header")
            meta = dict(kv.split("=", 1) for kv in header.split()[1:])
            dists: dict = defaultdict(dict)
            for lineno, line in enumerate(fh, 2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected source<TAB>target<TAB>probability")
                dists[parts[0]][parts[1]] = float(parts[2])
        return cls.from_distributions(meta.get("resource", path.stem), meta.get("direction", "s2t"), dists)


@dataclass(frozen=True)
class WordAlignment:
    pair_index: int
    links: tuple  # per target position: source position or None for NULL


def _pairs_of(corpus):
    pairs = getattr(corpus, "pairs", corpus)
    return [(tuple(s), tuple(t)) for s, t in pairs]


class IBMModel1(BaseEstimator):
    """IBM Model 1 translation table trained by EM.

    ``fit`` learns ``p(target | source)`` from sentence pairs. Parameters
    start uniform (``1 / |target vocabulary|``) over co-occurring pairs.
    ``log_likelihood_`` holds the corpus log-likelihood before the first
    E-step and after every M-step.
    """

    def __init__(self, n_iter=5, use_null=True, floor=PROB_FLOOR):
        self.n_iter = n_iter
        self.use_null = use_null
        self.floor = floor

    def _sources(self, src):
        return ((NULL_TOKEN,) + src) if self.use_null else src

    def fit(self, corpus, y=None):
        pairs = _pairs_of(corpus)
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        src_vocab = {w for s, _ in pairs for w in s}
        tgt_vocab = {w for _, t in pairs for w in t}
        if not src_vocab or not tgt_vocab:
            raise ValueError("Model 1 needs non-empty source and target vocabularies")

        uniform = 1.0 / len(tgt_vocab)
        table: dict = defaultdict(dict)
        for src, tgt in pairs:
            for s in self._sources(src):
                row = table[s]
                for t in tgt:
                    row[t] = uniform

        self.log_likelihood_ = [self._log_likelihood(pairs, table)]
        for _ in range(self.n_iter):
            counts: dict = defaultdict(lambda: defaultdict(float))
            for src, tgt in pairs:
                sources = self._sources(src)
                rows = [table[s] for s in sources]
                for t in tgt:
                    probs = [row[t] for row in rows]
                    denom = math.fsum(probs)
                    for s, p in zip(sources, probs):
                        counts[s][t] += p / denom
            table = defaultdict(dict)
            for s, row in counts.items():
                total = math.fsum(row.values())
                table[s] = {t: c / total for t, c in row.items()}
            self.log_likelihood_.append(self._log_likelihood(pairs, table))

        self.translation_table_ = dict(table)
        return self

    def _log_likelihood(self, pairs, table) -> float:
        ll = 0.0
        for src, tgt in pairs:
            sources = self._sources(src)
            rows = [table[s] for s in sources]
            for t in tgt:
                ll += math.log(math.fsum(row[t] for row in rows) / len(sources))
        return ll

    def to_lexicon(self, resource_id, direction="s2t", include_null=False) -> Lexicon:
        check_is_fitted(self, "translation_table_")
        dists = {
            s: row for s, row in self.translation_table_.items() if include_null or s != NULL_TOKEN
        }
        return Lexicon.from_distributions(resource_id, direction, dists)

    def predict(self, corpus):
        """Viterbi-align every pair with the learned table."""
        lex = self.to_lexicon("model1", include_null=True)
        return [
            viterbi_align(pair, lex, use_null=self.use_null, floor=self.floor, pair_index=k)
            for k, pair in enumerate(_pairs_of(corpus))
        ]


def train_model1(corpus: SentencePairCorpus, iterations=5, use_null=True, resource_id=None,
                 direction="s2t", include_null=False) -> Lexicon:
    """Train Model 1 and return the ``p(target | source)`` lexicon.

    Set ``include_null`` to keep the NULL row, which :func:`viterbi_align`
    needs when aligning with NULL enabled.
    """
    model = IBMModel1(n_iter=iterations, use_null=use_null).fit(corpus)
    rid = resource_id or getattr(corpus, "name", "model1")
    return model.to_lexicon(rid, direction=direction, include_null=include_null)


def viterbi_align(pair, lexicon: Lexicon, use_null=True, floor=PROB_FLOOR, pair_index=0) -> WordAlignment:
    """Link each target token to its most probable source position.

    Scores below ``floor`` are raised to it; ties go to the leftmost
    position, with NULL (when enabled) leftmost of all.
    """
    src, tgt = pair
    candidates = ([(None, NULL_TOKEN)] if use_null else []) + list(enumerate(src))
    links = []
    for t in tgt:
        best, best_score = None, -1.0
        for pos, s in candidates:
            score = max(lexicon.prob(s, t), floor)
            if score > best_score:
                best, best_score = pos, score
        links.append(best)
    return WordAlignment(pair_index, tuple(links))


def extract_comparable_lexicon(corpus: ComparableCorpus, top_k=50, resource_id=None,
                               direction="s2t") -> Lexicon:
    """Alignment-score-weighted co-occurrence lexicon.

    The association of ``(s, t)`` sums the scores of the aligned document
    pairs whose source side contains ``s`` and target side contains ``t``;
    associations are normalized per source word before truncation to
    ``top_k``.
    """
    if not corpus.alignments:
        raise ValueError("comparable corpus has no alignments")
    assoc: dict = defaultdict(lambda: defaultdict(float))
    for src_doc, tgt_doc, score in corpus.aligned_pairs():
        tgt_vocab = sorted(set(tgt_doc))
        for s in sorted(set(src_doc)):
            row = assoc[s]
            for t in tgt_vocab:
                row[t] += score
    dists = {}
    for s, row in assoc.items():
        total = math.fsum(row.values())
        dists[s] = {t: v / total for t, v in row.items()}
    lex = Lexicon.from_distributions(resource_id or corpus.name, direction, dists)
    return prune_lexicon(lex, top_k=top_k, min_prob=0.0)


def dictionary_lexicon(dictionary: BilingualDictionary, direction="s2t", resource_id=None) -> Lexicon:
    """Uniform probabilities over dictionary translations.

    ``t2s`` inverts the entries first, so a target word listed under ``k``
    headwords gets ``1/k`` for each.
    """
    entries = dictionary.entries
    if direction == "t2s":
        inverted = defaultdict(list)
        for s in sorted(entries):
            for t in entries[s]:
                inverted[t].append(s)
        entries = inverted
    dists = {w: {t: 1.0 / len(ts) for t in ts} for w, ts in entries.items()}
    return Lexicon.from_distributions(resource_id or dictionary.name, direction, dists)


def prune_lexicon(lex: Lexicon, top_k=50, min_prob=1e-4) -> Lexicon:
    """Keep at most ``top_k`` entries with probability >= ``min_prob``; no renormalization."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not 0 <= min_prob < 1:
        raise ValueError("min_prob must lie in [0, 1)")
    table = {}
    for w, entries in lex.table.items():
        kept = tuple((t, p) for t, p in entries[:top_k] if p >= min_prob)
        if kept:
            table[w] = kept
    return Lexicon(lex.resource_id, lex.direction, table)
