"""Experiment orchestration: resources, baselines, linear combination and LTR runs."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import load_comparable, load_dictionary, load_documents, load_parallel, tokenize
from .features import (
    ContextSpec,
    FeatureSchema,
    SchemaMismatchError,
    TranslationResource,
    build_schema,
    extract_matrix,
    normalize_lists,
)
from .labeling import (
    LabelingReport,
    build_training_data,
    candidate_pool,
    write_training_file,
)
from .lexicon import (
    Lexicon,
    dictionary_lexicon,
    extract_comparable_lexicon,
    prune_lexicon,
    train_model1,
)
from .ranker import (
    CoordinateAscentRanker,
    RankedCandidates,
    RankingModel,
    make_ranker,
    score_and_rank,
    top_n,
)
from .retrieval import (
    SIGNIFICANCE_LEVEL,
    EvalResult,
    bm25_search,
    build_index,
    construct_query,
    evaluate,
    paired_ttest,
    read_qrels,
    read_topics,
    write_queries,
    write_run,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

DEFAULT_N = {"dictionary": 6, "comparable": 3, "parallel": 5, "linear": 5, "ltr": 5}
RESOURCE_KINDS = ("parallel", "comparable", "dictionary")


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class LinearCombinationConfig:
    weights: dict  # resource id -> lambda

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("linear combination weights must be non-negative")
        total = math.fsum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"linear combination weights sum to {total}, expected 1")


@dataclass(frozen=True)
class ResourceSpec:
    id: str
    kind: str
    paths: dict


@dataclass
class ExperimentConfig:
    root: Path
    resources: list
    labeling_corpus: str
    documents: str
    topics: str
    qrels: str
    seed: int = 7
    output_dir: str = "out"
    dev_topics: str = ""
    dev_qrels: str = ""
    heldout: str = ""
    trainer: str = "coordinate_ascent"
    trainer_params: dict = field(default_factory=dict)
    context_resource: str = ""
    pool_k: int = 10
    validation: str = "any"
    model1_iterations: int = 5
    lexicon_top_k: int = 50
    lexicon_min_prob: float = 1e-4
    retrieval_depth: int = 1000
    k1: float = 1.2
    b: float = 0.75
    n: dict = field(default_factory=lambda: dict(DEFAULT_N))
    linear_weights: dict | None = None
    tune_linear: bool = True
    tune_n: list = field(default_factory=list)  # methods whose top-N is picked on dev topics
    n_max: int = 6

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
        return cls.from_dict(raw, root=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, root=".") -> "ExperimentConfig":
        raw = dict(raw)
        resources = []
        for spec in raw.pop("resources", []):
            spec = dict(spec)
            rid, kind = spec.pop("id"), spec.pop("kind")
            if kind not in RESOURCE_KINDS:
                raise ValueError(f"resource {rid!r}: unknown kind {kind!r}")
            resources.append(ResourceSpec(rid, kind, spec))
        if not resources:
            raise ValueError("config lists no resources")
        bm25 = raw.pop("bm25", {})
        n = {**DEFAULT_N, **raw.pop("n", {})}
        if any(v < 1 for v in n.values()):
            raise ValueError("every N must be >= 1")
        linear = raw.pop("linear", {})
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "tune_n" in raw and not isinstance(raw["tune_n"], list):
            raise ValueError("tune_n must be a list of method names")
        return cls(
            root=Path(root), resources=resources, n=n,
            k1=float(bm25.get("k1", 1.2)), b=float(bm25.get("b", 0.75)),
            linear_weights=linear.get("weights"), tune_linear=bool(linear.get("tune", "weights" not in linear)),
            **raw,
        )

    def path(self, rel) -> Path:
        return self.root / rel

    @property
    def output_path(self) -> Path:
        return self.path(self.output_dir)

    def input_files(self) -> dict:
        files = {}
        for spec in self.resources:
            for key, rel in sorted(spec.paths.items()):
                files[f"{spec.id}.{key}"] = rel
        for key in ("labeling_corpus", "documents", "topics", "qrels", "dev_topics", "dev_qrels", "heldout"):
            if getattr(self, key):
                files[key] = getattr(self, key)
        return files

    def validate(self) -> None:
        for name, rel in self.input_files().items():
            if not self.path(rel).is_file():
                raise FileNotFoundError(f"{name}: {self.path(rel)} does not exist")

    def snapshot(self) -> dict:
        return {
            "seed": self.seed,
            "resources": [{"id": r.id, "kind": r.kind, **r.paths} for r in self.resources],
            "trainer": self.trainer,
            "trainer_params": self.trainer_params,
            "context_resource": self.context_resource,
            "pool_k": self.pool_k,
            "validation": self.validation,
            "model1_iterations": self.model1_iterations,
            "lexicon_top_k": self.lexicon_top_k,
            "lexicon_min_prob": self.lexicon_min_prob,
            "retrieval_depth": self.retrieval_depth,
            "bm25": {"k1": self.k1, "b": self.b},
            "n": dict(sorted(self.n.items())),
            "tune_n": list(self.tune_n),
            "n_max": self.n_max,
            "linear": {"weights": self.linear_weights, "tune": self.tune_linear},
            "inputs": self.input_files(),
        }


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- resources ---------------------------------------------------------------


def build_resource(spec: ResourceSpec, config: ExperimentConfig) -> TranslationResource:
    top_k, min_prob = config.lexicon_top_k, config.lexicon_min_prob
    if spec.kind == "parallel":
        corpus = load_parallel(config.path(spec.paths["path"]), name=spec.id)
        s2t = train_model1(corpus, config.model1_iterations, resource_id=spec.id)
        t2s = train_model1(corpus.swapped(), config.model1_iterations, resource_id=spec.id, direction="t2s")
        return TranslationResource.from_parallel(
            corpus, prune_lexicon(s2t, top_k, min_prob), prune_lexicon(t2s, top_k, min_prob), spec.id
        )
    if spec.kind == "comparable":
        corpus = load_comparable(*(config.path(spec.paths[k]) for k in ("src", "tgt", "align")), name=spec.id)
        s2t = extract_comparable_lexicon(corpus, top_k, resource_id=spec.id)
        t2s = extract_comparable_lexicon(corpus.swapped(), top_k, resource_id=spec.id, direction="t2s")
        return TranslationResource.from_comparable(
            corpus, prune_lexicon(s2t, top_k, min_prob), prune_lexicon(t2s, top_k, min_prob), spec.id
        )
    dictionary = load_dictionary(config.path(spec.paths["path"]), name=spec.id)
    return TranslationResource.from_dictionary(
        dictionary_lexicon(dictionary, "s2t", spec.id), dictionary_lexicon(dictionary, "t2s", spec.id), spec.id
    )


def linear_combine(lexicons, config: LinearCombinationConfig, words=None, resource_id="linear") -> Lexicon:
    """Weighted sum of translation probabilities across resources.

    Only resources with a positive weight contribute entries, so a one-hot
    configuration reproduces that resource's lexicon exactly.
    """
    by_id = {lex.resource_id: lex for lex in lexicons}
    if set(config.weights) != set(by_id):
        raise ValueError(
            f"weights cover {sorted(config.weights)} but lexicons are {sorted(by_id)}"
        )
    active = [(by_id[rid], lam) for rid, lam in config.weights.items() if lam > 0]
    keys = set(words) if words is not None else {w for lex, _ in active for w in lex.table}
    dists: dict = {}
    for w in sorted(keys):
        acc: dict = defaultdict(list)
        for lex, lam in active:
            for t, p in lex.translations(w):
                acc[t].append(lam * p)
        if acc:
            dists[w] = {t: math.fsum(v) for t, v in acc.items()}
    return Lexicon.from_distributions(resource_id, "s2t", dists)


def lambda_grid(resource_ids, step=0.1):
    """All weight vectors on the simplex with the given step."""
    k = len(resource_ids)
    units = int(round(1 / step))
    for combo in itertools.product(range(units + 1), repeat=k - 1):
        rest = units - sum(combo)
        if rest < 0:
            continue
        lams = [c / units for c in combo] + [rest / units]
        yield dict(zip(resource_ids, lams))


# -- training data and features ------------------------------------------------


def featurize_instances(instances, resources, schema):
    """Attach raw feature matrices using each instance's own sentence pair as context."""
    out = []
    for inst in instances:
        ctx = ContextSpec(inst.source_sentence, inst.target_sentence)
        out.append(inst.with_features(
            extract_matrix(inst.source_word, inst.words, ctx, resources, schema, _checked=True)
        ))
    return out


def instances_to_arrays(instances):
    X = np.vstack([inst.features for inst in instances])
    y = np.concatenate([inst.labels for inst in instances])
    qid = np.concatenate([[inst.query_id] * len(inst.candidates) for inst in instances])
    return X, y, qid


def train_ranker(X, y, qid, schema, trainer="coordinate_ascent", **params) -> RankingModel:
    """Fit on per-list min-max normalized features; ``schema`` is a FeatureSchema or its hash."""
    Xn = normalize_lists(X, qid)
    ranker = make_ranker(trainer, **params).fit(Xn, y, qid)
    schema_hash = schema.hash if isinstance(schema, FeatureSchema) else str(schema)
    return ranker.to_model(schema_hash, normalization="list_minmax")


def forward_selection(X, y, qid, names, validation=None, max_features=None, ranker_params=None):
    """Greedy forward feature selection with warm-started coordinate ascent.

    Each round tries every remaining feature together with the selected set
    and keeps the one with the best metric: training MAP by default, or MAP
    on ``validation = (X, y, qid)`` if given. The returned report lists
    ``(feature name, training MAP, selection metric)`` per round.
    """
    if X.shape[1] < 2:
        raise ValueError("forward selection needs at least two features")
    params = {"n_restarts": 1, **(ranker_params or {})}
    Xn = normalize_lists(X, qid)
    Xv = None
    if validation is not None:
        Xv = normalize_lists(validation[0], validation[2])
    selected, coef, report = [], None, []
    remaining = list(range(X.shape[1]))
    limit = max_features or X.shape[1]
    while remaining and len(selected) < limit:
        best = None
        for j in remaining:
            cols = selected + [j]
            init = None if coef is None else np.r_[coef, 0.0]
            ranker = CoordinateAscentRanker(init_coef=init, **params).fit(Xn[:, cols], y, qid)
            metric = ranker.train_map_
            if Xv is not None:
                metric = ranker.score(Xv[:, cols], validation[1], validation[2])
            if best is None or metric > best[0]:
                best = (metric, j, ranker)
        metric, j, ranker = best
        selected.append(j)
        remaining.remove(j)
        coef = ranker.coef_
        report.append((names[j], ranker.train_map_, metric))
    return report


# -- query translation -------------------------------------------------------


def lexicon_candidates(lexicon: Lexicon, words) -> dict:
    return {w: RankedCandidates.from_lexicon(lexicon.translations(w)) for w in words if w in lexicon}


class QueryTranslator:
    """Rerank pooled candidates of query words with a trained model.

    The source context is the query itself; the target context is the top
    ``context_n`` translations of every query word in ``context_resource``.
    """

    def __init__(self, resources, model: RankingModel, pool_k=10, context_resource=None, context_n=5):
        self.resources = list(resources)
        self.model = model
        self.pool_k = pool_k
        self.schema = build_schema(self.resources)
        if model.schema_hash != self.schema.hash:
            raise SchemaMismatchError(
                f"model schema {model.schema_hash} does not match resources ({self.schema.hash})"
            )
        by_id = {r.resource_id: r for r in self.resources}
        self.context_lexicon = by_id[context_resource or self.resources[0].resource_id].s2t
        self.context_n = context_n

    def target_context(self, words) -> tuple:
        out = []
        for w in words:
            out.extend(t for t, _ in self.context_lexicon.translations(w, self.context_n))
        return tuple(out)

    def rank(self, words) -> dict:
        words = tuple(words)
        ctx = ContextSpec(words, self.target_context(words))
        lexicons = [r.s2t for r in self.resources]
        ranked = {}
        for w in dict.fromkeys(words):
            pool = candidate_pool(w, lexicons, self.pool_k)
            if not pool:
                continue
            X = extract_matrix(w, pool, ctx, self.resources, self.schema, _checked=True)
            ranked[w] = score_and_rank(self.model, pool, X, self.schema.hash)
        return ranked


# -- experiment --------------------------------------------------------------


class Experiment:
    """Loaded state for one configuration: resources, index, topics and qrels."""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        self.resources = [build_resource(spec, config) for spec in config.resources]
        self.by_id = {r.resource_id: r for r in self.resources}
        docs = load_documents(config.path(config.documents))
        self.index = build_index(docs)
        self.topics = {q: tokenize(t) for q, t in read_topics(config.path(config.topics)).items()}
        self.qrels = read_qrels(config.path(config.qrels))
        self.dev_topics = self.dev_qrels = None
        if config.dev_topics and config.dev_qrels:
            self.dev_topics = {q: tokenize(t) for q, t in read_topics(config.path(config.dev_topics)).items()}
            self.dev_qrels = read_qrels(config.path(config.dev_qrels))

    def n_for(self, kind) -> int:
        return self.config.n[kind]

    def select_n(self, run):
        """Pick the top-N by dev MAP; ``run(n, topics, qrels)`` returns a result first.

        Ties keep the smallest N. Returns ``(n, dev MAP)``.
        """
        if self.dev_topics is None:
            raise ValueError("selecting N needs dev_topics and dev_qrels")
        best = None
        for n in range(1, self.config.n_max + 1):
            score = run(n, self.dev_topics, self.dev_qrels)[0].map
            if best is None or score > best[1] + 1e-12:
                best = (n, score)
        return best

    def retrieve(self, queries, qrels, meta):
        cfg = self.config
        run = {
            qid: bm25_search(self.index, q, k=cfg.retrieval_depth, k1=cfg.k1, b=cfg.b)
            for qid, q in queries.items()
        }
        oov = sum(len(q.oov) for q in queries.values())
        result = evaluate(run, qrels, oov=oov, meta=meta)
        return result, run

    def run_translations(self, per_word, n, weighted, method, topics=None, qrels=None):
        topics = self.topics if topics is None else topics
        qrels = self.qrels if qrels is None else qrels
        queries = {qid: construct_query(words, per_word(words), n=n, weighted=weighted)
                   for qid, words in topics.items()}
        meta = {"method": method, "n": n, "weighted": weighted}
        result, run = self.retrieve(queries, qrels, meta)
        return result, run, queries

    def run_single_resource(self, lexicon: Lexicon, n=None, weighted=None, kind=None, topics=None, qrels=None):
        if kind is None:
            res = self.by_id.get(lexicon.resource_id)
            kind = res.kind if res is not None else "parallel"
        n = n or self.n_for(kind)
        if weighted is None:
            weighted = kind != "dictionary"
        return self.run_translations(
            lambda words: lexicon_candidates(lexicon, words), n, weighted, lexicon.resource_id, topics, qrels
        )

    def run_linear(self, weights: LinearCombinationConfig, n=None, topics=None, qrels=None):
        topics = self.topics if topics is None else topics
        words = {w for ws in topics.values() for w in ws}
        lex = linear_combine([r.s2t for r in self.resources], weights, words=words)
        return self.run_translations(
            lambda ws: lexicon_candidates(lex, ws), n or self.n_for("linear"), True, "linear", topics, qrels
        )

    def tune_linear(self, step=0.1):
        """Grid-search resource weights by MAP on the dev topics (ties keep the first)."""
        if self.dev_topics is None:
            raise ValueError("tuning the linear combination needs dev_topics and dev_qrels")
        ids = [r.resource_id for r in self.resources]
        best = None
        for lams in lambda_grid(ids, step):
            cfg = LinearCombinationConfig(lams)
            result, _, _ = self.run_linear(cfg, topics=self.dev_topics, qrels=self.dev_qrels)
            if best is None or result.map > best[0] + 1e-12:
                best = (result.map, cfg)
        return best[1], best[0]

    def build_training(self, report=None):
        cfg = self.config
        corpus = load_parallel(cfg.path(cfg.labeling_corpus), name="labeling")
        aligner = train_model1(corpus, cfg.model1_iterations, resource_id="labeling", include_null=True)
        instances = build_training_data(
            corpus, [r.s2t for r in self.resources], aligner,
            pool_k=cfg.pool_k, validation=cfg.validation, report=report,
        )
        schema = build_schema(self.resources)
        return featurize_instances(instances, self.resources, schema), schema

    def translator(self, model, context_resource=None) -> QueryTranslator:
        return QueryTranslator(self.resources, model, pool_k=self.config.pool_k,
                               context_resource=context_resource or self.config.context_resource or None)

    def run_ltr(self, model: RankingModel, n=None, context_resource=None, topics=None, qrels=None):
        translator = self.translator(model, context_resource)
        return self.run_translations(translator.rank, n or self.n_for("ltr"), True, "ltr", topics, qrels)


def read_heldout(path) -> list:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def translation_accuracy(heldout, predict) -> float:
    """Top-1 accuracy over ambiguous word occurrences; ``predict(word, sentence)`` returns a word or None."""
    hits = total = 0
    for rec in heldout:
        for w in rec["ambiguous"]:
            total += 1
            hits += predict(w, tuple(rec["source"])) == rec["gold"][w]
    return hits / total if total else 0.0


def ltr_accuracy(translator: QueryTranslator, heldout) -> float:
    cache = {}

    def predict(word, sentence):
        if sentence not in cache:
            cache[sentence] = translator.rank(sentence)
        ranked = cache[sentence].get(word)
        return ranked.words[0] if ranked else None

    return translation_accuracy(heldout, predict)


def lexicon_accuracy(lexicon: Lexicon, heldout) -> float:
    def predict(word, _):
        entries = lexicon.translations(word, 1)
        return entries[0][0] if entries else None

    return translation_accuracy(heldout, predict)


def _compare(a: EvalResult, b: EvalResult) -> dict:
    qids = sorted(set(a.ap) & set(b.ap))
    out = {"map_gap": a.map - b.map, "queries": len(qids)}
    try:
        t, df, p = paired_ttest([a.ap[q] for q in qids], [b.ap[q] for q in qids])
        out.update(t=t, df=df, p=p, significant=bool(p < SIGNIFICANCE_LEVEL))
    except ValueError as exc:
        out.update(t=None, df=len(qids) - 1, p=None, significant=False, note=str(exc))
    return out


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every baseline plus LTR, write artifacts and a manifest; returns the manifest."""
    cfg = config
    out = cfg.output_path
    for sub in ("lexicons", "runs", "queries"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg.seed)
    exp = Experiment(cfg)
    written = []

    for res in exp.resources:
        for lex in (res.s2t, res.t2s):
            path = out / "lexicons" / f"{res.resource_id}.{lex.direction}.tsv"
            lex.write(path)
            written.append(path)

    def save(method, result, run, queries):
        run_path = out / "runs" / f"{method}.run"
        query_path = out / "queries" / f"{method}.tsv"
        write_run(run, run_path, tag=method)
        write_queries(queries, query_path)
        written.extend([run_path, query_path])
        return result

    chosen_n = {}

    def pick_n(method, default, run):
        if method in cfg.tune_n:
            chosen_n[method] = exp.select_n(run)[0]
        else:
            chosen_n[method] = default
        return chosen_n[method]

    results = {}
    for res in exp.resources:
        n = pick_n(res.resource_id, exp.n_for(res.kind),
                   lambda n, t, q, lex=res.s2t, kind=res.kind: exp.run_single_resource(lex, n, kind=kind, topics=t, qrels=q))
        results[res.resource_id] = save(res.resource_id, *exp.run_single_resource(res.s2t, n, kind=res.kind))
    single_ids = [r.resource_id for r in exp.resources]
    best_single = max(single_ids, key=lambda rid: (results[rid].map, rid))

    if cfg.linear_weights and not cfg.tune_linear:
        lin_cfg, dev_map = LinearCombinationConfig(dict(cfg.linear_weights)), None
    else:
        lin_cfg, dev_map = exp.tune_linear()
    n = pick_n("linear", exp.n_for("linear"),
               lambda n, t, q: exp.run_linear(lin_cfg, n, topics=t, qrels=q))
    results["linear"] = save("linear", *exp.run_linear(lin_cfg, n))
    results["linear"].meta["weights"] = lin_cfg.weights

    report = LabelingReport()
    instances, schema = exp.build_training(report)
    X, y, qid = instances_to_arrays(instances)
    letor_path = out / "training.letor"
    schema_path = out / "schema.json"
    write_training_file(instances, schema, letor_path)
    schema.write(schema_path)
    params = {"random_state": cfg.seed, **cfg.trainer_params}
    model = train_ranker(X, y, qid, schema, cfg.trainer, **params)
    context_resource = cfg.context_resource or best_single
    model = RankingModel(model.weights, model.schema_hash, model.trainer,
                         {**model.meta, "context_resource": context_resource})
    model_path = out / "model.json"
    model.save(model_path)
    written.extend([letor_path, schema_path, model_path])
    n = pick_n("ltr", exp.n_for("ltr"),
               lambda n, t, q: exp.run_ltr(model, n, context_resource, topics=t, qrels=q))
    results["ltr"] = save("ltr", *exp.run_ltr(model, n, context_resource=context_resource))

    significance = {f"ltr_vs_{m}": _compare(results["ltr"], results[m]) for m in single_ids + ["linear"]}
    significance["linear_vs_best_single"] = _compare(results["linear"], results[best_single])

    accuracy = None
    if cfg.heldout:
        heldout = read_heldout(cfg.path(cfg.heldout))
        accuracy = {rid: lexicon_accuracy(exp.by_id[rid].s2t, heldout) for rid in single_ids}
        accuracy["ltr"] = ltr_accuracy(exp.translator(model, context_resource), heldout)
        accuracy["occurrences"] = sum(len(r["ambiguous"]) for r in heldout)

    manifest = {
        "config": cfg.snapshot(),
        "inputs": {name: file_sha256(cfg.path(rel)) for name, rel in cfg.input_files().items()},
        "results": {m: r.to_json() for m, r in results.items()},
        "best_single": best_single,
        "context_resource": context_resource,
        "linear": {"weights": lin_cfg.weights, "dev_map": dev_map},
        "n": chosen_n,
        "significance": significance,
        "translation_accuracy": accuracy,
        "labeling": vars(report),
        "training": {"instances": len(instances), "rows": int(len(y)), "features": len(schema),
                     "schema_hash": schema.hash, "train_map": model.meta.get("train_map")},
        "outputs": {str(p.relative_to(out)): file_sha256(p) for p in sorted(written)},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
