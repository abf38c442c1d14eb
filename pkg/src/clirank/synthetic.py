"""Seeded synthetic bilingual world for desk-scale experiments.

The world has a ground-truth word mapping in which some source words have two
topic-dependent senses, four translation resources with disjoint coverage
gaps, a labeling corpus, a held-out corpus with gold translations, and a
target-language collection with topics and relevance judgments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    BilingualDictionary,
    ComparableCorpus,
    SentencePairCorpus,
    write_alignments,
    write_dictionary,
    write_documents,
    write_parallel,
)
from .retrieval import write_qrels, write_topics

RESOURCE_IDS = ("par_a", "par_b", "cmp", "dict")


@dataclass
class SyntheticWorld:
    seed: int
    source_words: list
    senses: dict  # source word -> [(target word, topic)]; topic None for general words
    gaps: dict  # resource id -> frozenset of source words
    parallel: dict  # resource id -> SentencePairCorpus
    comparable: ComparableCorpus
    dictionary: BilingualDictionary
    labeling: SentencePairCorpus
    heldout: list  # {"source": [...], "target": [...], "gold": {src: tgt}}
    documents: dict
    topics: dict
    qrels: dict
    dev_topics: dict
    dev_qrels: dict
    query_gold: dict = field(default_factory=dict)

    @property
    def ambiguous(self) -> list:
        return sorted(w for w, s in self.senses.items() if len(s) > 1)

    def write(self, out_dir, config_name="exp.toml") -> Path:
        """Write every artifact plus an experiment config; returns the config path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for rid, corpus in self.parallel.items():
            write_parallel(corpus, out / f"{rid}.tsv")
        write_documents(self.comparable.src_docs, out / "cmp_src.jsonl")
        write_documents(self.comparable.tgt_docs, out / "cmp_tgt.jsonl")
        write_alignments(self.comparable.alignments, out / "cmp_align.jsonl")
        write_dictionary(self.dictionary, out / "dict.tsv")
        write_parallel(self.labeling, out / "labeling.tsv")
        with (out / "heldout.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
            for rec in self.heldout:
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
        write_documents(self.documents, out / "docs.jsonl")
        write_topics(self.topics, out / "topics.tsv")
        write_qrels(self.qrels, out / "qrels.txt")
        write_topics(self.dev_topics, out / "dev_topics.tsv")
        write_qrels(self.dev_qrels, out / "dev_qrels.txt")
        truth = {
            "seed": self.seed,
            "senses": {w: [[t, k] for t, k in s] for w, s in sorted(self.senses.items())},
            "gaps": {r: sorted(g) for r, g in sorted(self.gaps.items())},
            "query_gold": self.query_gold,
        }
        (out / "truth.json").write_text(json.dumps(truth, ensure_ascii=False, sort_keys=True, indent=1) + "\n",
                                        encoding="utf-8")
        config = out / config_name
        config.write_text(_CONFIG_TEMPLATE.format(seed=self.seed), encoding="utf-8")
        return config


_CONFIG_TEMPLATE = """\
# experiment over a generated synthetic world; paths are relative to this file
seed = {seed}
output_dir = "out"
labeling_corpus = "labeling.tsv"
documents = "docs.jsonl"
topics = "topics.tsv"
qrels = "qrels.txt"
dev_topics = "dev_topics.tsv"
dev_qrels = "dev_qrels.txt"
heldout = "heldout.jsonl"
trainer = "coordinate_ascent"
tune_n = ["linear", "ltr"]
n_max = 6
context_resource = ""
pool_k = 10
validation = "any"
model1_iterations = 5
lexicon_top_k = 50
lexicon_min_prob = 1e-4
retrieval_depth = 1000

[trainer_params]
n_restarts = 2

[bm25]
k1 = 1.2
b = 0.75

[n]
dictionary = 6
comparable = 3
parallel = 5
linear = 5
ltr = 5

[linear]
tune = true

[[resources]]
id = "par_a"
kind = "parallel"
path = "par_a.tsv"

[[resources]]
id = "par_b"
kind = "parallel"
path = "par_b.tsv"

[[resources]]
id = "cmp"
kind = "comparable"
src = "cmp_src.jsonl"
tgt = "cmp_tgt.jsonl"
align = "cmp_align.jsonl"

[[resources]]
id = "dict"
kind = "dictionary"
path = "dict.tsv"
"""


class _Sampler:
    """Draws topic-conditioned sentences and documents from the ground truth."""

    def __init__(self, rng, n_topics, pools, general, general_weight, translate, function_words):
        self.rng = rng
        self.n_topics = n_topics
        self.pools = pools  # topic -> (words, probs)
        self.general = general
        self.general_weight = general_weight
        self.translate = translate  # (word, topic) -> target word
        self.function_words = function_words

    def _draw(self, topic, size, exclude):
        words, probs = self.pools[topic]
        if exclude:
            keep = np.array([w not in exclude for w in words])
            words = [w for w, k in zip(words, keep) if k]
            probs = probs[keep] / probs[keep].sum()
        size = min(size, len(words))
        idx = self.rng.choice(len(words), size=size, replace=False, p=probs)
        return [words[i] for i in sorted(idx)]

    def sentence(self, topic, exclude=frozenset(), length=(4, 8)):
        n = int(self.rng.integers(length[0], length[1] + 1))
        src = self._draw(topic, n, exclude)
        if self.rng.random() < 0.3:
            gen = [g for g in self.general if g not in exclude]
            if gen:
                src.insert(int(self.rng.integers(0, len(src) + 1)), gen[int(self.rng.integers(len(gen)))])
        gold = {w: self.translate(w, topic) for w in src}
        tgt = [gold[w] for w in src]
        if self.rng.random() < 0.3:
            tgt.append(self.function_words[int(self.rng.integers(len(self.function_words)))])
        order = self.rng.permutation(len(tgt))
        tgt = [tgt[i] for i in order]
        self.rng.shuffle(src)
        return src, tgt, gold

    def target_document(self, topic, length):
        src = self._draw(topic, length, frozenset())
        n_general = int(self.rng.binomial(length, self.general_weight))
        words = [self.translate(w, topic) for w in src]
        words += [self.translate(self.general[int(i)], topic)
                  for i in self.rng.integers(0, len(self.general), n_general)]
        words += [self.function_words[int(i)] for i in self.rng.integers(0, len(self.function_words), 3)]
        order = self.rng.permutation(len(words))
        return [words[i] for i in order]


def generate_synthetic_world(seed=7, n_source_words=400, n_topics=8, ambiguity=0.3,
                             gap_fraction=0.1, n_par_a=3000, n_par_b=1500, n_comparable=400,
                             n_labeling=600, n_heldout=300, n_documents=800, n_queries=60,
                             n_dev_queries=40, query_length=3,
                             stories_per_topic=6, story_size=6, concept_rate=0.7) -> SyntheticWorld:
    """Generate a complete synthetic CLIR world, fully determined by ``seed``."""
    if n_source_words < 200:
        raise ValueError("n_source_words must be >= 200")
    if n_par_a + n_par_b < 2000:
        raise ValueError("need >= 2000 resource sentence pairs in total")
    if not 0 <= ambiguity <= 0.5:
        raise ValueError("ambiguity must lie in [0, 0.5]")
    if gap_fraction * len(RESOURCE_IDS) > 1:
        raise ValueError("coverage gaps must fit disjointly in the vocabulary")
    rng = np.random.default_rng(seed)

    source_words = [f"en{i:04d}" for i in range(n_source_words)]
    n_general = max(4, n_source_words // 20)
    general = source_words[:n_general]
    topical = source_words[n_general:]
    perm = rng.permutation(len(topical))
    home = {topical[i]: int(k % n_topics) for k, i in enumerate(perm)}
    n_ambiguous = int(round(ambiguity * n_source_words))
    ambiguous = sorted(topical[i] for i in rng.choice(len(topical), size=n_ambiguous, replace=False))

    counter = iter(range(10 ** 6))

    def new_target():
        return f"fa{next(counter):04d}"

    senses: dict = {}
    for w in general:
        senses[w] = [(new_target(), None)]
    for w in topical:
        senses[w] = [(new_target(), home[w])]
        if w in ambiguous:
            other = int((home[w] + 1 + rng.integers(0, n_topics - 1)) % n_topics)
            senses[w].append((new_target(), other))
    function_words = [f"fx{i:02d}" for i in range(8)]

    base = {w: float(rng.lognormal(0.0, 0.6)) for w in source_words}
    dominance = {w: float(rng.uniform(0.6, 0.8)) for w in ambiguous}
    pools = {}
    for k in range(n_topics):
        words, weights = [], []
        for w in topical:
            for s, (_, topic) in enumerate(senses[w]):
                if topic != k:
                    continue
                share = 1.0
                if w in dominance:
                    share = dominance[w] if s == 0 else 1.0 - dominance[w]
                words.append(w)
                weights.append(base[w] * share)
        weights = np.asarray(weights)
        pools[k] = (words, weights / weights.sum())

    def translate(word, topic):
        options = senses[word]
        if len(options) == 1:
            return options[0][0]
        for t, k in options:
            if k == topic:
                return t
        raise AssertionError(f"{word} has no sense in topic {topic}")

    sampler = _Sampler(rng, n_topics, pools, general, 0.15, translate, function_words)

    gap_perm = [source_words[i] for i in rng.permutation(n_source_words)]
    size = int(round(gap_fraction * n_source_words))
    gaps = {rid: frozenset(gap_perm[r * size:(r + 1) * size]) for r, rid in enumerate(RESOURCE_IDS)}

    def parallel_corpus(name, n_pairs, topic_probs, exclude):
        pairs = []
        for _ in range(n_pairs):
            topic = int(rng.choice(n_topics, p=topic_probs))
            src, tgt, _ = sampler.sentence(topic, exclude)
            if src and tgt:
                pairs.append((tuple(src), tuple(tgt)))
        return SentencePairCorpus(tuple(pairs), name=name)

    uniform_topics = np.full(n_topics, 1.0 / n_topics)
    skewed_topics = rng.dirichlet(np.full(n_topics, 2.0))
    parallel = {
        "par_a": parallel_corpus("par_a", n_par_a, uniform_topics, gaps["par_a"]),
        "par_b": parallel_corpus("par_b", n_par_b, skewed_topics, gaps["par_b"]),
    }

    # comparable corpus: same-topic document pairs, partially translated
    src_docs, tgt_docs, alignments = {}, {}, []
    for i in range(n_comparable):
        topic = int(rng.integers(n_topics))
        words = sampler._draw(topic, 25, gaps["cmp"])
        n_gen = int(rng.binomial(25, 0.15))
        words += [general[int(j)] for j in rng.integers(0, n_general, n_gen) if general[int(j)] not in gaps["cmp"]]
        kept = [translate(w, topic) for w in words if rng.random() < 0.5]
        extra = [translate(w, topic) for w in sampler._draw(topic, 12, gaps["cmp"])]
        src_docs[f"s{i:04d}"] = tuple(words)
        tgt_docs[f"t{i:04d}"] = tuple(kept + extra)
        alignments.append((f"s{i:04d}", f"t{i:04d}", round(float(rng.uniform(0.5, 1.0)), 4)))
    for _ in range(n_comparable // 10):
        a, b = rng.integers(0, n_comparable, 2)
        alignments.append((f"s{int(a):04d}", f"t{int(b):04d}", round(float(rng.uniform(0.05, 0.3)), 4)))
    alignments = sorted(set(alignments))
    comparable = ComparableCorpus(src_docs, tgt_docs, tuple(alignments), name="cmp")

    entries = {}
    for w in source_words:
        if w in gaps["dict"]:
            continue
        targets = [t for t, _ in senses[w]]
        topic = senses[w][0][1]
        if topic is not None and rng.random() < 0.2:
            pool_words = pools[topic][0]
            spurious = translate(pool_words[int(rng.integers(len(pool_words)))], topic)
            if spurious not in targets:
                targets.append(spurious)
        entries[w] = tuple(targets)
    dictionary = BilingualDictionary(entries, name="dict")

    labeling = parallel_corpus("labeling", n_labeling, uniform_topics, frozenset())

    heldout = []
    for _ in range(n_heldout):
        topic = int(rng.integers(n_topics))
        src, tgt, gold = sampler.sentence(topic)
        heldout.append({
            "source": src,
            "target": tgt,
            "gold": gold,
            "ambiguous": sorted(w for w in src if len(senses[w]) > 1),
        })

    # target collection: documents grouped into stories, each story built on a
    # few key concepts of one topic; a query names some concepts of a story
    stories = []
    for k in range(n_topics):
        for _ in range(stories_per_topic):
            stories.append((k, sampler._draw(k, story_size, frozenset())))
    documents, doc_story = {}, {}
    for i in range(n_documents):
        sid = int(rng.integers(len(stories)))
        topic, concepts = stories[sid]
        words = []
        for w in concepts:
            if rng.random() < concept_rate:
                words.extend([translate(w, topic)] * int(1 + rng.poisson(1.0)))
        words += sampler.target_document(topic, int(rng.integers(12, 20)))
        doc_id = f"d{i:05d}"
        documents[doc_id] = " ".join(words[j] for j in rng.permutation(len(words)))
        doc_story[doc_id] = sid

    def make_queries(prefix, count):
        topics, qrels, gold_map = {}, {}, {}
        while len(topics) < count:
            sid = int(rng.integers(len(stories)))
            topic, concepts = stories[sid]
            relevant = sorted(d for d, s in doc_story.items() if s == sid)
            if not relevant:
                continue
            picks = rng.choice(len(concepts), size=min(query_length, len(concepts)), replace=False)
            words = [concepts[int(i)] for i in sorted(picks)]
            qid = f"{prefix}{len(topics) + 1:03d}"
            topics[qid] = " ".join(words)
            qrels[qid] = {d: 1 for d in relevant}
            gold_map[qid] = {w: translate(w, topic) for w in words}
        return topics, qrels, gold_map

    topics, qrels, gold_test = make_queries("q", n_queries)
    dev_topics, dev_qrels, gold_dev = make_queries("dev", n_dev_queries)

    return SyntheticWorld(
        seed=seed,
        source_words=source_words,
        senses=senses,
        gaps=gaps,
        parallel=parallel,
        comparable=comparable,
        dictionary=dictionary,
        labeling=labeling,
        heldout=heldout,
        documents=documents,
        topics=topics,
        qrels=qrels,
        dev_topics=dev_topics,
        dev_qrels=dev_qrels,
        query_gold={**gold_test, **gold_dev},
    )
