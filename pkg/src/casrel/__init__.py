"""Relational triple extraction by cascade binary tagging, on a small numpy autodiff core."""

from .datasets import Corpus, RelationSet, Sentence, categorize_overlap, corpus_stats, load_corpus
from .encoder import EncoderConfig, Vocabulary
from .evaluation import evaluate_predictions, score_micro, triple_match
from .extraction import ExtractedTriple, extract_corpus, extract_triples
from .kernels import BACKEND
from .model import CasRelModel
from .synthetic import SynthConfig, generate_synthetic
from .training import TrainConfig, train

__all__ = [
    "BACKEND", "CasRelModel", "Corpus", "EncoderConfig", "ExtractedTriple", "RelationSet", "Sentence",
    "SynthConfig", "TrainConfig", "Vocabulary", "categorize_overlap", "corpus_stats", "evaluate_predictions",
    "extract_corpus", "extract_triples", "generate_synthetic", "load_corpus", "score_micro", "train",
    "triple_match",
]
