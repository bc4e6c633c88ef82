"""Model container and the batched training objective.

The loss graph for a mini-batch packs all sentences into one encoder pass.
Object-tagger inputs ``x_i + v_sub`` for every (gold subject, token) pair are
produced by a single constant "gather" matrix ``G`` applied to the encoder
output: row ``(j, s, i)`` of ``G @ H`` equals ``h_j[i] + mean(h_j[s.start..s.end])``.
"""

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .autodiff import Graph
from .datasets import RelationSet
from .encoder import EncoderConfig, Vocabulary, encode_many, encoder_graph, init_encoder_params, pack
from .tagging import ObjectTaggerParams, SubjectTaggerParams, build_gold_tags, init_head_params

SUPERVISION_MODES = ("all-subjects", "sample-one")


@dataclass
class Example:
    """A sentence prepared for training: token ids plus gold tags."""

    ids: np.ndarray
    gold: object

    @property
    def length(self):
        return int(self.ids.size)


class CasRelModel:
    def __init__(self, config, relations, vocab, params):
        self.config = config
        self.relations = relations if isinstance(relations, RelationSet) else RelationSet(relations)
        self.vocab = vocab
        self.params = params

    @classmethod
    def initialize(cls, config, relations, vocab, seed=0):
        rng = np.random.default_rng(seed)
        relations = relations if isinstance(relations, RelationSet) else RelationSet(relations)
        params = init_encoder_params(config, rng)
        params.update(init_head_params(config.hidden_size, len(relations), rng, config.init_scale))
        return cls(config, relations, vocab, params)

    @property
    def num_relations(self):
        return len(self.relations)

    def with_params(self, params):
        return CasRelModel(self.config, self.relations, self.vocab, params)

    def subject_params(self):
        return SubjectTaggerParams.from_params(self.params)

    def object_params(self):
        return ObjectTaggerParams.from_params(self.params)

    def token_ids(self, tokens):
        return self.vocab.encode(list(tokens)[: self.config.max_len])

    def example(self, sentence):
        ids = self.token_ids(sentence.tokens)
        gold = build_gold_tags(ids.size, sentence.span_triples(), self.num_relations)
        return Example(ids, gold)

    def encode(self, id_sequences):
        return encode_many(list(id_sequences), self.params, self.config)

    # -- persistence -----------------------------------------------------------

    def metadata(self):
        return {
            "encoder": self.config.to_dict(),
            "relations": list(self.relations.names),
            "vocab": list(self.vocab.tokens),
        }

    def save(self, path):
        checkpoint.save(path, self.params, self.metadata())

    @classmethod
    def load(cls, path):
        params, meta = checkpoint.load(path)
        config = EncoderConfig(**meta["encoder"])
        vocab = Vocabulary(meta["vocab"][2:])
        return cls(config, RelationSet(meta["relations"]), vocab, params)


def _subjects_for(example, mode, rng):
    spans = list(example.gold.objects)  # sorted by span
    if mode == "sample-one" and spans:
        return [spans[int(rng.integers(len(spans)))]]
    return spans


def loss_graph(model, examples, mode="all-subjects", rng=None, dropout_rng=None):
    """Build the mean per-sentence negative log-likelihood over ``examples``.

    Returns ``(graph, loss_node)``. Subject terms cover every gold subject at
    once; object terms are added per gold subject (all of them, or one sampled
    with ``rng`` in ``sample-one`` mode) and include every relation, so
    relations a subject does not lead contribute their all-zero null tags.
    """
    if mode not in SUPERVISION_MODES:
        raise ValueError(f"unknown supervision mode {mode!r}")
    if mode == "sample-one" and rng is None:
        raise ValueError("sample-one mode needs an rng")
    R = model.num_relations
    packed = pack([ex.ids for ex in examples], model.config)
    g = Graph(model.params)
    H = encoder_graph(g, model.config, packed, dropout_rng)

    y_sub = np.concatenate([np.stack([ex.gold.subject.start, ex.gold.subject.end], axis=1) for ex in examples])
    p_sub = g.sigmoid(g.affine(H, g.param("subject.W"), g.param("subject.b")))
    loss = g.sum(g.bce(p_sub, g.const(y_sub.astype(np.float64))))

    gather_rows, targets = [], []
    T = packed.total
    for ex, off in zip(examples, packed.seg_starts):
        L = ex.length
        for span in _subjects_for(ex, mode, rng):
            starts, ends = ex.gold.objects[span]
            G = np.zeros((L, T))
            G[np.arange(L), off + np.arange(L)] = 1.0
            G[:, off + span.start: off + span.end + 1] += 1.0 / len(span)
            gather_rows.append(G)
            targets.append(np.concatenate([starts.T, ends.T], axis=1))
    if gather_rows:
        x_obj = g.matmul(g.const(np.concatenate(gather_rows)), H)
        p_obj = g.sigmoid(g.affine(x_obj, g.param("object.W"), g.param("object.b")))
        y_obj = np.concatenate(targets).astype(np.float64)
        assert y_obj.shape[1] == 2 * R
        loss = g.add(loss, g.sum(g.bce(p_obj, g.const(y_obj))))
    return g, g.scale(loss, 1.0 / len(examples))
