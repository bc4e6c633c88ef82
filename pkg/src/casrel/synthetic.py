"""Template-generated corpora with a controlled Normal / EPO / SEO mix.

Every sentence is built from clauses of the form ``SUBJ <trigger> OBJ`` where
the trigger word names the relation. Entities are one or two capitalised
pseudo-words; no word is reused inside a sentence, so every entity string
aligns to exactly one span.

Two clauses with different subjects never share a relation. The object tagger
sees the subject only through an additive term, which shifts a relation's
logits by the same amount at every token; it can switch a relation on or off
per subject but cannot move that relation's object. "A r B and C r D" is
therefore not representable and is never generated.

Templates per category::

    normal  A t1 B                       (1 triple)
            A t1 B and C t2 D            (2 disjoint triples)
    epo     A t1 and t2 B                (two relations over one pair)
    seo     A t1 B and t2 C              (shared subject)
            A and B t1 C                 (shared object)
            A t1 B t2 C                  (object doubles as subject)
"""

import json
from dataclasses import dataclass

import numpy as np

from .datasets import categorize_overlap, dumps_records

RELATION_NAMES = [
    ("born_in", "born"), ("works_for", "employs"), ("capital_of", "capital"), ("located_in", "located"),
    ("founded_by", "founded"), ("member_of", "joined"), ("part_of", "within"), ("married_to", "wed"),
]
FILLERS = ["the", "report", "says", "today", "indeed", "reportedly", "yesterday", "officially"]
_FUNCTION_WORDS = ["and", "."]
_ONSETS = "b d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


class SynthError(ValueError):
    pass


@dataclass
class SynthConfig:
    num_sentences: int = 200
    num_relations: int = 4
    vocab_size: int = 80
    mix: tuple = (0.4, 0.3, 0.3)
    seed: int = 0
    max_entity_words: int = 2
    max_fillers: int = 2


@dataclass
class SynthCorpus:
    records: list
    relations: list
    categories: list

    def dumps(self):
        return dumps_records(self.records)

    def vocabulary(self):
        return sorted({tok for r in self.records for tok in r["text"].split()})


def _relations(n):
    if n <= len(RELATION_NAMES):
        return RELATION_NAMES[:n]
    return RELATION_NAMES + [(f"rel_{i}", f"trig{i}") for i in range(len(RELATION_NAMES), n)]


def _entity_words(count):
    words = []
    for v2 in _VOWELS:
        for o1 in _ONSETS:
            for v1 in _VOWELS:
                for o2 in _ONSETS:
                    words.append((o1 + v1 + o2 + v2).capitalize())
    # spread picks over the syllable space so words differ in their first letters
    step = max(1, len(words) // max(count, 1))
    picked = words[::step][:count]
    if len(picked) < count:
        raise SynthError(f"cannot make {count} distinct entity words")
    return picked


def _split_counts(n, mix):
    raw = np.asarray(mix, dtype=np.float64) * n
    counts = np.floor(raw).astype(int)
    rest = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    for i in order[:rest]:
        counts[i] += 1
    return counts


class _SentenceMaker:
    def __init__(self, rng, entity_words, relations, cfg):
        self.rng = rng
        self.words = entity_words
        self.rel = relations
        self.cfg = cfg

    def entities(self, k):
        sizes = self.rng.integers(1, self.cfg.max_entity_words + 1, size=k)
        picks = self.rng.choice(len(self.words), size=int(sizes.sum()), replace=False)
        out, pos = [], 0
        for n in sizes:
            out.append([self.words[i] for i in picks[pos:pos + n]])
            pos += n
        return out

    def relations(self, k, distinct=True):
        return [int(r) for r in self.rng.choice(len(self.rel), size=k, replace=not distinct)]

    def fillers(self):
        n = int(self.rng.integers(0, self.cfg.max_fillers + 1))
        return [FILLERS[i] for i in self.rng.choice(len(FILLERS), size=n, replace=False)]

    def build(self, category):
        trig = lambda r: self.rel[r][1]  # noqa: E731
        name = lambda r: self.rel[r][0]  # noqa: E731
        if category != "normal" and len(self.rel) < 2:
            raise SynthError(f"{category} sentences need at least two relations")
        if category == "normal":
            if self.rng.random() < 0.5 or len(self.rel) < 2:
                a, b = self.entities(2)
                (r,) = self.relations(1)
                body = a + [trig(r)] + b
                triples = [(a, name(r), b)]
            else:
                a, b, c, d = self.entities(4)
                r1, r2 = self.relations(2)
                body = a + [trig(r1)] + b + ["and"] + c + [trig(r2)] + d
                triples = [(a, name(r1), b), (c, name(r2), d)]
        elif category == "epo":
            a, b = self.entities(2)
            r1, r2 = self.relations(2)
            body = a + [trig(r1), "and", trig(r2)] + b
            triples = [(a, name(r1), b), (a, name(r2), b)]
        else:
            form = int(self.rng.integers(0, 3))
            a, b, c = self.entities(3)
            if form == 0:
                r1, r2 = self.relations(2, distinct=False)
                body = a + [trig(r1)] + b + ["and", trig(r2)] + c
                triples = [(a, name(r1), b), (a, name(r2), c)]
            elif form == 1:
                (r,) = self.relations(1)
                body = a + ["and"] + b + [trig(r)] + c
                triples = [(a, name(r), c), (b, name(r), c)]
            else:
                r1, r2 = self.relations(2)
                body = a + [trig(r1)] + b + [trig(r2)] + c
                triples = [(a, name(r1), b), (b, name(r2), c)]
        tokens = self.fillers() + body + self.fillers() + ["."]
        return {
            "text": " ".join(tokens),
            "triple_list": [[" ".join(s), r, " ".join(o)] for s, r, o in triples],
        }


def generate_synthetic(cfg):
    """Deterministic synthetic corpus for ``cfg``; returns a :class:`SynthCorpus`."""
    mix = tuple(float(x) for x in cfg.mix)
    if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
        raise SynthError(f"overlap mix must be three non-negative fractions summing to 1, got {cfg.mix}")
    if cfg.num_sentences < 0:
        raise SynthError("sentence count must be non-negative")
    if cfg.num_relations < 1:
        raise SynthError("need at least one relation")
    if (mix[1] > 0 or mix[2] > 0) and cfg.num_relations < 2:
        raise SynthError("EPO and SEO sentences need at least two relations")
    if cfg.max_entity_words < 1:
        raise SynthError("entities need at least one word")
    relations = _relations(cfg.num_relations)
    fixed = len(relations) + len(FILLERS) + len(_FUNCTION_WORDS)
    n_entity_words = cfg.vocab_size - fixed
    if n_entity_words < 4 * cfg.max_entity_words:
        raise SynthError(f"vocab size {cfg.vocab_size} leaves only {n_entity_words} entity words")

    rng = np.random.default_rng(cfg.seed)
    maker = _SentenceMaker(rng, _entity_words(n_entity_words), relations, cfg)
    counts = _split_counts(cfg.num_sentences, mix)
    categories = ["normal"] * counts[0] + ["epo"] * counts[1] + ["seo"] * counts[2]
    categories = [categories[i] for i in rng.permutation(len(categories))]
    records = []
    for cat in categories:
        rec = maker.build(cat)
        flags = categorize_overlap(tuple(t) for t in rec["triple_list"])
        assert getattr(flags, cat), (cat, rec)
        records.append(rec)
    return SynthCorpus(records, [r[0] for r in relations], categories)


def write_synthetic(corpus, path, relations_path=None):
    from .checkpoint import write_atomic

    write_atomic(path, corpus.dumps())
    if relations_path is not None:
        write_atomic(relations_path, json.dumps(corpus.relations, indent=0) + "\n")
