"""Training data for the translation ranker from a word-aligned parallel corpus."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import SCHEMA_VERSION, FeatureSchema, SchemaMismatchError
from .lexicon import Lexicon, viterbi_align

logger = logging.getLogger(__name__)

VALIDATION_MODES = ("any", "all")


@dataclass(frozen=True)
class TrainingInstance:
    query_id: int
    source_word: str
    source_sentence: tuple
    target_sentence: tuple
    candidates: tuple  # (target word, label)
    features: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("instance needs at least one candidate")
        labels = [lab for _, lab in self.candidates]
        if any(lab not in (0, 1) for lab in labels):
            raise ValueError("labels must be 0 or 1")
        if sum(labels) > 1:
            raise ValueError("at most one candidate may be labeled 1")

    @property
    def words(self):
        return [w for w, _ in self.candidates]

    @property
    def labels(self):
        return [lab for _, lab in self.candidates]

    def with_features(self, features) -> "TrainingInstance":
        return replace(self, features=np.asarray(features, dtype=np.float64))


@dataclass
class LabelingReport:
    occurrences: int = 0
    skipped_short: int = 0
    skipped_oov: int = 0
    dropped_no_positive: int = 0
    emitted: int = 0


def _is_word(token) -> bool:
    return len(token) >= 2 and any(ch.isalnum() for ch in token)


def candidate_pool(word, lexicons: Sequence[Lexicon], pool_k) -> list:
    """Union of each resource's top ``pool_k`` translations, sorted by word."""
    pool = set()
    for lex in lexicons:
        pool.update(t for t, _ in lex.translations(word, pool_k))
    return sorted(pool)


def _aligned_word(pair, alignment, position, aligner: Lexicon):
    src, tgt = pair
    best, best_p = None, -1.0
    for j, link in enumerate(alignment.links):
        if link == position:
            p = aligner.prob(src[position], tgt[j])
            if p > best_p:
                best, best_p = tgt[j], p
    return best


def build_training_data(labeling_corpus, resources: Sequence[Lexicon], aligner: Lexicon,
                        pool_k=10, validation="any", use_null=True, report=None):
    """Label pooled translation candidates of every source-word occurrence.

    The word aligned to an occurrence is the positive candidate when the
    resource lexicons confirm the translation relation (``any`` or ``all``
    of them); every other pooled candidate is negative. Occurrences with no
    confirmed positive are dropped, occurrences no lexicon covers are
    skipped; both are tallied in ``report``.
    """
    if not resources:
        raise ValueError("at least one resource lexicon is required")
    if validation not in VALIDATION_MODES:
        raise ValueError(f"validation must be one of {VALIDATION_MODES}")
    report = report if report is not None else LabelingReport()
    quantifier = any if validation == "any" else all
    pairs = getattr(labeling_corpus, "pairs", labeling_corpus)

    instances = []
    for k, pair in enumerate(pairs):
        src, tgt = pair
        alignment = viterbi_align(pair, aligner, use_null=use_null, pair_index=k)
        seen = set()
        for i, word in enumerate(src):
            if word in seen:
                continue
            seen.add(word)
            report.occurrences += 1
            if not _is_word(word):
                report.skipped_short += 1
                continue
            pool = candidate_pool(word, resources, pool_k)
            if not pool:
                report.skipped_oov += 1
                continue
            aligned = _aligned_word(pair, alignment, i, aligner)
            positive = None
            if aligned is not None and aligned in tgt and quantifier(
                lex.has_relation(word, aligned) for lex in resources
            ):
                positive = aligned
                if positive not in pool:
                    pool = sorted(pool + [positive])
            if positive is None:
                report.dropped_no_positive += 1
                continue
            instances.append(
                TrainingInstance(
                    query_id=len(instances) + 1,
                    source_word=word,
                    source_sentence=tuple(src),
                    target_sentence=tuple(tgt),
                    candidates=tuple((c, int(c == positive)) for c in pool),
                )
            )
    report.emitted = len(instances)
    logger.info(
        "labeling: %d instances, %d dropped without positive, %d skipped (no candidates)",
        report.emitted, report.dropped_no_positive, report.skipped_oov,
    )
    return instances


def write_instances(instances, path) -> None:
    """Stage file for unfeaturized instances (JSON lines)."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            rec = {
                "qid": inst.query_id,
                "src": inst.source_word,
                "source_sentence": list(inst.source_sentence),
                "target_sentence": list(inst.target_sentence),
                "candidates": [[w, lab] for w, lab in inst.candidates],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_instances(path) -> list:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append(
                    TrainingInstance(
                        rec["qid"], rec["src"], tuple(rec["source_sentence"]),
                        tuple(rec["target_sentence"]), tuple((w, int(l)) for w, l in rec["candidates"]),
                    )
                )
    return out


@dataclass
class LetorData:
    """Parsed LETOR-style feature file."""

    X: np.ndarray
    y: np.ndarray
    qid: np.ndarray
    src: list
    tgt: list
    schema_hash: str | None = None
    version: str | None = None

    def lists(self):
        """Yield ``(qid, row indices)`` per candidate list in file order."""
        order = {}
        for i, q in enumerate(self.qid):
            order.setdefault(int(q), []).append(i)
        for q, rows in order.items():
            yield q, np.asarray(rows)


def write_training_file(instances, schema: FeatureSchema, path) -> None:
    """Write featurized instances as ``label qid:<n> 1:<v> ... #src=<w> tgt=<t>`` lines."""
    lines = [f"# schema={schema.version} hash={schema.hash} features={len(schema)}\n"]
    for inst in sorted(instances, key=lambda x: x.query_id):
        if inst.features is None:
            raise ValueError(f"instance {inst.query_id} has no features attached")
        F = np.asarray(inst.features)
        if F.shape != (len(inst.candidates), len(schema)):
            raise SchemaMismatchError(
                f"instance {inst.query_id}: features shape {F.shape} does not fit "
                f"{len(inst.candidates)} candidates x {len(schema)} slots"
            )
        for (word, label), row in sorted(zip(inst.candidates, F), key=lambda r: r[0][0]):
            feats = " ".join(f"{j}:{float(v)!r}" for j, v in enumerate(row, 1))
            lines.append(f"{label} qid:{inst.query_id} {feats} #src={inst.source_word} tgt={word}\n")
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_training_file(path) -> LetorData:
    path = Path(path)
    X, y, qid, src, tgt = [], [], [], [], []
    schema_hash = version = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                meta = dict(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
                schema_hash = meta.get("hash", schema_hash)
                version = meta.get("schema", version)
                continue
            if not line.strip():
                continue
            body, _, comment = line.partition("#")
            parts = body.split()
            try:
                label = int(parts[0])
                if not parts[1].startswith("qid:"):
                    raise ValueError
                q = int(parts[1][4:])
                values = []
                for j, tok in enumerate(parts[2:], 1):
                    idx, val = tok.split(":", 1)
                    if int(idx) != j:
                        raise ValueError
                    values.append(float(val))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed LETOR line") from None
            meta = dict(kv.split("=", 1) for kv in comment.split() if "=" in kv)
            X.append(values)
            y.append(label)
            qid.append(q)
            src.append(meta.get("src"))
            tgt.append(meta.get("tgt"))
    width = len(X[0]) if X else 0
    if any(len(row) != width for row in X):
        raise ValueError(f"{path}: rows have differing feature counts")
    return LetorData(
        np.asarray(X, dtype=np.float64).reshape(len(X), width),
        np.asarray(y, dtype=np.int64),
        np.asarray(qid, dtype=np.int64),
        src, tgt, schema_hash, version or SCHEMA_VERSION,
    )
