"""Command-line entry point.

Every verb reads its inputs from files and writes its outputs to files, so any
stage can be rerun on its own. Exit status: 0 on success, 1 on a usage error,
2 on a data error (unreadable, malformed or inconsistent input).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .corpus import (
    CorpusFormatError,
    load_comparable,
    load_dictionary,
    load_documents,
    load_parallel,
    tokenize,
)
from .features import FeatureSchema, SchemaMismatchError, build_schema
from .labeling import (
    LabelingReport,
    build_training_data,
    read_instances,
    read_training_file,
    write_instances,
    write_training_file,
)
from .lexicon import (
    DIRECTIONS,
    dictionary_lexicon,
    extract_comparable_lexicon,
    prune_lexicon,
    train_model1,
)
from .pipeline import (
    Experiment,
    ExperimentConfig,
    LinearCombinationConfig,
    featurize_instances,
    forward_selection,
    lexicon_candidates,
    linear_combine,
    run_experiment,
    train_ranker,
)
from .ranker import TRAINERS, RankingModel
from .retrieval import (
    InvertedIndex,
    bm25_search,
    build_index,
    construct_query,
    evaluate,
    paired_ttest,
    read_qrels,
    read_queries,
    read_run,
    read_topics,
    write_queries,
    write_run,
)
from .synthetic import generate_synthetic_world

log = logging.getLogger("clirank")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _write_json(obj, path):
    text = json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- verbs ---------------------------------------------------------------------


def cmd_train_model1(args):
    corpus = load_parallel(args.corpus)
    if args.direction == "t2s":
        corpus = corpus.swapped()
    lex = train_model1(corpus, args.iterations, use_null=not args.no_null,
                       resource_id=args.resource_id, direction=args.direction)
    prune_lexicon(lex, args.top_k, args.min_prob).write(args.out)
    log.info("wrote %d source entries to %s", len(lex.table), args.out)


def cmd_extract_lexicon(args):
    if args.kind == "comparable":
        if not (args.src and args.tgt and args.align):
            raise UsageError("comparable extraction needs --src, --tgt and --align")
        corpus = load_comparable(args.src, args.tgt, args.align)
        if args.direction == "t2s":
            corpus = corpus.swapped()
        lex = extract_comparable_lexicon(corpus, args.top_k, resource_id=args.resource_id,
                                         direction=args.direction)
    else:
        if not args.dictionary:
            raise UsageError("dictionary extraction needs --dictionary")
        lex = dictionary_lexicon(load_dictionary(args.dictionary), args.direction, args.resource_id)
    lex.write(args.out)
    log.info("wrote %d source entries to %s", len(lex.table), args.out)


def cmd_build_training_data(args):
    exp = Experiment(ExperimentConfig.load(args.config))
    cfg = exp.config
    corpus = load_parallel(cfg.path(cfg.labeling_corpus), name="labeling")
    aligner = train_model1(corpus, cfg.model1_iterations, resource_id="labeling", include_null=True)
    report = LabelingReport()
    instances = build_training_data(corpus, [r.s2t for r in exp.resources], aligner,
                                    pool_k=cfg.pool_k, validation=cfg.validation, report=report)
    write_instances(instances, args.out)
    log.info("wrote %d instances to %s", len(instances), args.out)


def cmd_extract_features(args):
    exp = Experiment(ExperimentConfig.load(args.config))
    schema = build_schema(exp.resources)
    instances = featurize_instances(read_instances(args.instances), exp.resources, schema)
    write_training_file(instances, schema, args.out)
    if args.schema:
        schema.write(args.schema)
    log.info("wrote %d lists over %d features to %s", len(instances), len(schema), args.out)


def cmd_train_ranker(args):
    data = read_training_file(args.training)
    if data.schema_hash is None:
        raise ValueError(f"{args.training}: missing '# schema=... hash=...' header")
    if args.schema:
        schema = FeatureSchema.read(args.schema)
        if schema.hash != data.schema_hash or len(schema) != data.X.shape[1]:
            raise SchemaMismatchError(f"{args.schema} does not describe {args.training}")
    else:
        schema = data.schema_hash
    params = dict(args.param or [])
    model = train_ranker(data.X, data.y, data.qid, schema, args.trainer, **params)
    model.save(args.out)
    log.info("training MAP %.4f; model written to %s", model.meta.get("train_map", float("nan")), args.out)


def cmd_translate(args):
    exp = Experiment(ExperimentConfig.load(args.config))
    topics = {q: tokenize(t) for q, t in read_topics(args.topics).items()}
    n = args.n
    if args.method == "ltr":
        if not args.model:
            raise UsageError("--method ltr needs --model")
        translator = exp.translator(RankingModel.load(args.model), args.context_resource)
        per_word, n, weighted = translator.rank, n or exp.n_for("ltr"), True
    elif args.method == "linear":
        weights = dict(args.weight or [])
        if not weights:
            weights = exp.config.linear_weights
        if not weights:
            raise UsageError("--method linear needs --weight id=value for every resource (or [linear] weights)")
        lex = linear_combine([r.s2t for r in exp.resources], LinearCombinationConfig(weights))
        per_word, n, weighted = (lambda ws: lexicon_candidates(lex, ws)), n or exp.n_for("linear"), True
    elif args.method in exp.by_id:
        res = exp.by_id[args.method]
        per_word = lambda ws: lexicon_candidates(res.s2t, ws)  # noqa: E731
        n, weighted = n or exp.n_for(res.kind), res.kind != "dictionary"
    else:
        raise UsageError(f"unknown method {args.method!r}; use ltr, linear or one of {sorted(exp.by_id)}")
    if args.unweighted:
        weighted = False
    queries = {q: construct_query(words, per_word(words), n=n, weighted=weighted) for q, words in topics.items()}
    write_queries(queries, args.out)
    log.info("translated %d topics (%d OOV words) into %s", len(queries),
             sum(len(q.oov) for q in queries.values()), args.out)


def cmd_index(args):
    index = build_index(load_documents(args.docs))
    index.save(args.out)
    log.info("indexed %d documents into %s", index.N, args.out)


def cmd_search(args):
    index = InvertedIndex.load(args.index)
    queries = read_queries(args.queries)
    run = {q: bm25_search(index, query, k=args.k, k1=args.k1, b=args.b, weighted=not args.unweighted)
           for q, query in queries.items()}
    write_run(run, args.out, tag=args.tag)
    log.info("wrote a run for %d queries to %s", len(run), args.out)


def cmd_evaluate(args):
    qrels = read_qrels(args.qrels)
    oov = 0
    if args.queries:
        oov = sum(len(q.oov) for q in read_queries(args.queries).values())
    result = evaluate(read_run(args.run), qrels, oov=oov, meta={"run": Path(args.run).name})
    out = result.to_json()
    if args.baseline:
        base = evaluate(read_run(args.baseline), qrels)
        shared = sorted(set(result.ap) & set(base.ap))
        t, df, p = paired_ttest([result.ap[q] for q in shared], [base.ap[q] for q in shared])
        out["versus_baseline"] = {"baseline": Path(args.baseline).name, "map_gap": result.map - base.map,
                                  "t": t, "df": df, "p": p}
    _write_json(out, args.out)


def cmd_run_experiment(args):
    config = ExperimentConfig.load(args.config)
    manifest = run_experiment(config)
    for method, res in manifest["results"].items():
        log.info("%-8s MAP %.4f  P@5 %.4f  P@10 %.4f", method, res["map"], res["p@5"], res["p@10"])
    log.info("manifest written to %s", config.output_path / "manifest.json")


def cmd_gen_synthetic(args):
    world = generate_synthetic_world(seed=args.seed, **dict(args.param or []))
    path = world.write(args.out)
    log.info("synthetic world written; config at %s", path)


def cmd_feature_ablation(args):
    data = read_training_file(args.training)
    schema = FeatureSchema.read(args.schema)
    if schema.hash != data.schema_hash:
        raise SchemaMismatchError(f"{args.schema} does not describe {args.training}")
    report = forward_selection(data.X, data.y, data.qid, schema.names, max_features=args.max_features)
    _write_json([{"feature": name, "train_map": tm, "metric": m} for name, tm, m in report], args.out)


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clirank", description="Cross-language retrieval with learned query translation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads for numeric libraries")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train-model1", help="train a Model-1 lexicon on a parallel corpus")
    p.add_argument("--corpus", required=True, help="source<TAB>target sentence pairs")
    p.add_argument("--out", required=True)
    p.add_argument("--direction", choices=DIRECTIONS, default="s2t")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--no-null", action="store_true", help="train without the NULL source token")
    p.add_argument("--resource-id", default=None)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--min-prob", type=float, default=1e-4)
    p.set_defaults(func=cmd_train_model1)

    p = sub.add_parser("extract-lexicon", help="build a lexicon from a comparable corpus or a dictionary")
    p.add_argument("kind", choices=("comparable", "dictionary"))
    p.add_argument("--out", required=True)
    p.add_argument("--src")
    p.add_argument("--tgt")
    p.add_argument("--align")
    p.add_argument("--dictionary")
    p.add_argument("--direction", choices=DIRECTIONS, default="s2t")
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--resource-id", default=None)
    p.set_defaults(func=cmd_extract_lexicon)

    p = sub.add_parser("build-training-data", help="label candidate lists from the labeling corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="instances (JSON lines)")
    p.set_defaults(func=cmd_build_training_data)

    p = sub.add_parser("extract-features", help="featurize labeled instances into a LETOR file")
    p.add_argument("--config", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema", help="also write the feature schema here")
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("train-ranker", help="fit a linear ranking model on a LETOR file")
    p.add_argument("--training", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema", help="check the training file against this schema")
    p.add_argument("--trainer", choices=sorted(TRAINERS), default="coordinate_ascent")
    p.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="trainer hyperparameter, repeatable")
    p.set_defaults(func=cmd_train_ranker)

    p = sub.add_parser("translate", help="translate topics into weighted target-language queries")
    p.add_argument("--config", required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="ltr", help="ltr, linear, or a resource id")
    p.add_argument("--model")
    p.add_argument("--context-resource")
    p.add_argument("--weight", type=_param, action="append", metavar="ID=LAMBDA")
    p.add_argument("--n", type=int)
    p.add_argument("--unweighted", action="store_true")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("index", help="build an inverted index over JSON-lines documents")
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="BM25 search for translated queries")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--tag", default="clirank")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="MAP, P@5 and P@10 of a TREC run")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--queries", help="query stage file, for OOV counting")
    p.add_argument("--baseline", help="second run for a paired t-test")
    p.add_argument("--out", help="JSON output (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="run every baseline plus LTR from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic bilingual world")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="generator keyword, repeatable (e.g. n_queries=80)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("feature-ablation", help="greedy forward feature selection")
    p.add_argument("--training", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", help="JSON report (default stdout)")
    p.add_argument("--max-features", type=int)
    p.set_defaults(func=cmd_feature_ablation)
    return parser


DATA_ERRORS = (CorpusFormatError, SchemaMismatchError, ValueError, OSError, FloatingPointError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if args.threads is not None and args.threads < 1:
        parser.print_usage(sys.stderr)
        print("clirank: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except UsageError as exc:
        print(f"clirank {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"clirank {args.verb}: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
