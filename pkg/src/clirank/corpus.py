"""Corpus ingestion, tokenization and document-level count statistics."""

from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

TokenizedText = tuple  # tuple[str, ...]


class CorpusFormatError(ValueError):
    """Raised when an input file violates its line format.

    Carries the offending path and 1-based line number so CLI callers can
    report them verbatim.
    """

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


@lru_cache(maxsize=65536)
def _char_class(ch: str) -> str:
    # "s": separator, "d": drop, "k": keep
    cat = unicodedata.category(ch)
    if ch.isspace() or cat[0] == "P" or cat == "Cc":
        return "s"
    if cat[0] == "C":
        return "d"
    return "k"


def tokenize(text: str) -> TokenizedText:
    """Split raw text into normalized word tokens.

    NFKC-normalizes and casefolds, turns punctuation and control characters
    into separators, and deletes format characters (e.g. zero-width
    non-joiners) so that joined words stay joined.

    >>> tokenize("Brazil hosts football World Cup")
    ('brazil', 'hosts', 'football', 'world', 'cup')
    >>> tokenize("a,b.  c")
    ('a', 'b', 'c')
    """
    text = unicodedata.normalize("NFKC", text).casefold()
    out = []
    for ch in text:
        cls = _char_class(ch)
        if cls == "k":
            out.append(ch)
        elif cls == "s":
            out.append(" ")
    return tuple("".join(out).split())


@dataclass(frozen=True)
class SentencePairCorpus:
    pairs: tuple
    name: str = "parallel"
    skipped: int = 0

    def __post_init__(self):
        for k, (src, tgt) in enumerate(self.pairs):
            if not src or not tgt:
                raise ValueError(f"pair {k} has an empty side")

    def __len__(self):
        return len(self.pairs)

    @classmethod
    def from_texts(cls, pairs: Iterable[tuple[str, str]], name="parallel"):
        """Tokenize raw ``(source, target)`` strings, dropping pairs with an empty side."""
        kept, skipped = [], 0
        for src, tgt in pairs:
            s, t = tokenize(src), tokenize(tgt)
            if s and t:
                kept.append((s, t))
            else:
                skipped += 1
        return cls(tuple(kept), name=name, skipped=skipped)

    def swapped(self, name=None) -> "SentencePairCorpus":
        return SentencePairCorpus(
            tuple((t, s) for s, t in self.pairs), name=name or self.name, skipped=self.skipped
        )

    def source_docs(self):
        return [s for s, _ in self.pairs]

    def target_docs(self):
        return [t for _, t in self.pairs]


@dataclass(frozen=True)
class ComparableCorpus:
    src_docs: Mapping[str, TokenizedText]
    tgt_docs: Mapping[str, TokenizedText]
    alignments: tuple  # (src_id, tgt_id, score)
    name: str = "comparable"

    def __post_init__(self):
        for src_id, tgt_id, score in self.alignments:
            if src_id not in self.src_docs:
                raise ValueError(f"alignment references unknown source document {src_id!r}")
            if tgt_id not in self.tgt_docs:
                raise ValueError(f"alignment references unknown target document {tgt_id!r}")
            if not score > 0:
                raise ValueError(f"alignment ({src_id}, {tgt_id}) has non-positive score {score}")

    def swapped(self, name=None) -> "ComparableCorpus":
        return ComparableCorpus(
            self.tgt_docs,
            self.src_docs,
            tuple((t, s, sc) for s, t, sc in self.alignments),
            name=name or self.name,
        )

    def aligned_pairs(self):
        """Yield ``(source tokens, target tokens, score)`` per alignment."""
        for src_id, tgt_id, score in self.alignments:
            yield self.src_docs[src_id], self.tgt_docs[tgt_id], score


@dataclass(frozen=True)
class BilingualDictionary:
    entries: Mapping[str, tuple]
    name: str = "dictionary"

    def __post_init__(self):
        for src, targets in self.entries.items():
            if not targets:
                raise ValueError(f"dictionary entry {src!r} has no targets")
            if len(set(targets)) != len(targets):
                raise ValueError(f"dictionary entry {src!r} has duplicate targets")


@dataclass(frozen=True)
class CorpusStats:
    """Document-level counts over a collection.

    ``cooccur`` is keyed by the lexicographically ordered word pair; look-ups
    should go through :meth:`cooccurrence`, which also answers the diagonal
    case ``cooccurrence(w, w) == df[w]``.
    """

    doc_count: int
    df: Mapping[str, int]
    tf: Mapping[str, int]
    cooccur: Mapping[tuple, int] = field(repr=False)
    avg_doc_len: float

    def cooccurrence(self, w1: str, w2: str) -> int:
        if w1 == w2:
            return self.df.get(w1, 0)
        key = (w1, w2) if w1 < w2 else (w2, w1)
        return self.cooccur.get(key, 0)


def compute_stats(docs: Sequence[TokenizedText]) -> CorpusStats:
    """Count document frequency, term frequency and document co-occurrence."""
    if len(docs) == 0:
        raise ValueError("compute_stats needs at least one document")
    df: Counter = Counter()
    tf: Counter = Counter()
    cooccur: Counter = Counter()
    total = 0
    for doc in docs:
        tf.update(doc)
        total += len(doc)
        vocab = sorted(set(doc))
        df.update(vocab)
        cooccur.update(combinations(vocab, 2))
    return CorpusStats(
        doc_count=len(docs),
        df=dict(df),
        tf=dict(tf),
        cooccur=dict(cooccur),
        avg_doc_len=total / len(docs),
    )


def load_parallel(path, name=None) -> SentencePairCorpus:
    """Read a ``source<TAB>target`` file, one sentence pair per line."""
    path = Path(path)
    pairs, skipped = [], 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if "\t" not in line:
                if not line.strip():
                    skipped += 1
                    continue
                raise CorpusFormatError(path, lineno, "expected source<TAB>target")
            src, tgt = line.split("\t", 1)
            s, t = tokenize(src), tokenize(tgt)
            if not s or not t:
                skipped += 1
                continue
            pairs.append((s, t))
    if skipped:
        logger.warning("%s: skipped %d line(s) with an empty side", path, skipped)
    return SentencePairCorpus(tuple(pairs), name=name or path.stem, skipped=skipped)


def write_parallel(corpus_or_pairs, path) -> None:
    pairs = getattr(corpus_or_pairs, "pairs", corpus_or_pairs)
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in pairs:
            fh.write(f"{' '.join(src)}\t{' '.join(tgt)}\n")


def _read_jsonl(path):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, lineno, f"invalid JSON ({exc.msg})") from None


def load_documents(path) -> dict:
    """Read ``{"id", "text"}`` JSON-lines into an id -> tokens mapping."""
    docs = {}
    for lineno, rec in _read_jsonl(path):
        try:
            doc_id, text = str(rec["id"]), rec["text"]
        except (KeyError, TypeError):
            raise CorpusFormatError(path, lineno, 'expected {"id": ..., "text": ...}') from None
        if doc_id in docs:
            raise CorpusFormatError(path, lineno, f"duplicate document id {doc_id!r}")
        docs[doc_id] = tokenize(text)
    return docs


def write_documents(docs: Mapping[str, Sequence[str]], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for doc_id, tokens in docs.items():
            text = tokens if isinstance(tokens, str) else " ".join(tokens)
            fh.write(json.dumps({"id": doc_id, "text": text}, ensure_ascii=False) + "\n")


def load_comparable(src_path, tgt_path, align_path, name=None) -> ComparableCorpus:
    src_docs = load_documents(src_path)
    tgt_docs = load_documents(tgt_path)
    alignments = []
    for lineno, rec in _read_jsonl(align_path):
        try:
            src_id, tgt_id, score = str(rec["src"]), str(rec["tgt"]), float(rec["score"])
        except (KeyError, TypeError, ValueError):
            raise CorpusFormatError(
                align_path, lineno, 'expected {"src": ..., "tgt": ..., "score": ...}'
            ) from None
        for doc_id, known in ((src_id, src_docs), (tgt_id, tgt_docs)):
            if doc_id not in known:
                raise CorpusFormatError(align_path, lineno, f"unknown document id {doc_id!r}")
        if not 0 < score <= 1:
            raise CorpusFormatError(align_path, lineno, f"score {score} outside (0, 1]")
        alignments.append((src_id, tgt_id, score))
    return ComparableCorpus(
        src_docs, tgt_docs, tuple(alignments), name=name or Path(align_path).stem
    )


def write_alignments(alignments, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for src_id, tgt_id, score in alignments:
            fh.write(json.dumps({"src": src_id, "tgt": tgt_id, "score": score}) + "\n")


def load_dictionary(path, name=None) -> BilingualDictionary:
    """Read ``source<TAB>tgt1|tgt2|...`` entries.

    Multi-token headwords or translations are dropped since lexicons are
    word-to-word. Repeated source lines are merged.
    """
    path = Path(path)
    entries: dict = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise CorpusFormatError(path, lineno, "expected source<TAB>tgt1|tgt2|...")
            src_raw, tgt_raw = line.split("\t", 1)
            src = tokenize(src_raw)
            if len(src) != 1:
                continue
            targets = entries.setdefault(src[0], [])
            for raw in tgt_raw.split("|"):
                tok = tokenize(raw)
                if len(tok) == 1 and tok[0] not in targets:
                    targets.append(tok[0])
    return BilingualDictionary(
        {s: tuple(t) for s, t in entries.items() if t}, name=name or path.stem
    )


def write_dictionary(dictionary: BilingualDictionary, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for src, targets in dictionary.entries.items():
            fh.write(f"{src}\t{'|'.join(targets)}\n")
