"""Query translation for cross-language retrieval with a learned candidate ranker."""

from .corpus import tokenize
from .lexicon import IBMModel1, Lexicon, train_model1
from .features import CandidateFeaturizer, FeatureSchema, TranslationResource, build_schema
from .ranker import CoordinateAscentRanker, PairwiseHingeRanker, RankingModel, score_and_rank
from .retrieval import BM25Retriever, bm25_search, build_index, evaluate, paired_ttest
from .pipeline import ExperimentConfig, run_experiment
from .synthetic import generate_synthetic_world

__version__ = "0.1.0"

__all__ = [
    "BM25Retriever",
    "CandidateFeaturizer",
    "CoordinateAscentRanker",
    "ExperimentConfig",
    "FeatureSchema",
    "IBMModel1",
    "Lexicon",
    "PairwiseHingeRanker",
    "RankingModel",
    "TranslationResource",
    "bm25_search",
    "build_index",
    "build_schema",
    "evaluate",
    "generate_synthetic_world",
    "paired_ttest",
    "run_experiment",
    "score_and_rank",
    "tokenize",
    "train_model1",
]
