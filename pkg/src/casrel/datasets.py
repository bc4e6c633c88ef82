"""Corpus loading, span alignment, overlap categories and corpus statistics.

Corpus files hold one JSON record per line::

    {"text": "...", "triple_list": [["subject", "relation", "object"], ...]}

A file whose first non-blank character is ``[`` is read as a single JSON array
of the same records, which is how some public releases ship them.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

from .checkpoint import write_atomic
from .tagging import Span

log = logging.getLogger(__name__)

BUCKETS = ("1", "2", "3", "4", ">=5")


class CorpusError(ValueError):
    pass


class RelationSet:
    """Ordered relation names with dense ids."""

    def __init__(self, names=()):
        self.names = []
        self.index = {}
        for name in names:
            if name in self.index:
                raise CorpusError(f"duplicate relation name {name!r}")
            self.add(name)

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self.index

    def __eq__(self, other):
        return isinstance(other, RelationSet) and self.names == other.names

    def __repr__(self):
        return f"RelationSet({self.names!r})"

    def add(self, name):
        if name not in self.index:
            self.index[name] = len(self.names)
            self.names.append(name)
        return self.index[name]

    def id(self, name):
        return self.index[name]

    def save(self, path):
        write_atomic(path, json.dumps(self.names, ensure_ascii=False, indent=0) + "\n")

    @classmethod
    def load(cls, path):
        """Read a JSON list of names, an ``[id2rel, rel2id]`` pair, or one name per line."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            return cls(line.strip() for line in text.splitlines() if line.strip())
        if isinstance(data, list) and len(data) == 2 and all(isinstance(x, dict) for x in data):
            id2rel = data[0]
            return cls(id2rel[k] for k in sorted(id2rel, key=int))
        if isinstance(data, dict):
            return cls(sorted(data, key=data.get))
        return cls(data)


@dataclass
class Triple:
    subject: str
    relation: str
    object: str
    subject_span: Span
    object_span: Span
    relation_id: int

    def strings(self):
        return (self.subject, self.relation, self.object)


@dataclass
class Sentence:
    text: str
    tokens: list
    triples: list = field(default_factory=list)
    raw_triples: list = field(default_factory=list)
    dropped: int = 0

    def span_triples(self):
        return [(t.subject_span, t.relation_id, t.object_span) for t in self.triples]

    def gold_strings(self):
        return [t.strings() for t in self.triples]

    def to_record(self):
        return {"text": self.text, "triple_list": [list(t) for t in self.raw_triples]}


@dataclass
class Corpus:
    sentences: list
    relations: RelationSet
    dropped: int = 0
    truncated: int = 0

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i):
        return self.sentences[i]


def tokenize(text):
    return text.split()


def locate(tokens, entity):
    """Span of the first contiguous whitespace-token match of ``entity``, or None."""
    ent = entity.split()
    n = len(ent)
    if not n:
        return None
    for i in range(len(tokens) - n + 1):
        if tokens[i:i + n] == ent:
            return Span(i, i + n - 1)
    return None


def make_sentence(record, relations, max_len=100, unknown_relation="extend", where="record"):
    if not isinstance(record, dict) or not isinstance(record.get("text"), str) \
            or not isinstance(record.get("triple_list", []), list):
        raise CorpusError(f"{where}: expected an object with 'text' and 'triple_list'")
    text = record["text"]
    all_tokens = tokenize(text)
    tokens = all_tokens[:max_len]
    sent = Sentence(text, tokens)
    for item in record.get("triple_list", []):
        if not (isinstance(item, (list, tuple)) and len(item) == 3 and all(isinstance(x, str) for x in item)):
            raise CorpusError(f"{where}: malformed triple {item!r}")
        s, r, o = item
        sent.raw_triples.append((s, r, o))
        if r not in relations:
            if unknown_relation == "error":
                raise CorpusError(f"{where}: unknown relation {r!r}")
            relations.add(r)
        ss, os_ = locate(tokens, s), locate(tokens, o)
        if ss is None or os_ is None:
            sent.dropped += 1
            continue
        sent.triples.append(Triple(s, r, o, ss, os_, relations.id(r)))
    return sent


def read_records(path):
    """Yield ``(location, record)`` pairs from a JSON-lines or JSON-array file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: malformed JSON array: {exc}") from None
        for i, rec in enumerate(data):
            yield f"{path}: record {i}", rec
        return
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from None
        yield f"{path}:{lineno}", rec


def load_corpus(path, relations=None, max_len=100, unknown_relation="extend"):
    """Load and align a corpus file.

    Entities are aligned to their first whitespace-token occurrence. Triples
    whose entities cannot be found (including ones cut off by truncation to
    ``max_len`` tokens) are dropped and counted in ``Corpus.dropped``.
    """
    if unknown_relation not in ("extend", "error"):
        raise ValueError(f"unknown_relation must be 'extend' or 'error', got {unknown_relation!r}")
    relations = RelationSet() if relations is None else relations
    sentences = []
    truncated = 0
    for where, rec in read_records(path):
        sent = make_sentence(rec, relations, max_len, unknown_relation, where)
        truncated += len(sent.tokens) < len(tokenize(sent.text))
        sentences.append(sent)
    corpus = Corpus(sentences, relations, sum(s.dropped for s in sentences), truncated)
    if corpus.dropped:
        log.warning("%s: dropped %d triple(s) whose entities could not be aligned", path, corpus.dropped)
    if truncated:
        log.warning("%s: truncated %d sentence(s) to %d tokens", path, truncated, max_len)
    return corpus


def corpus_from_records(records, relations=None, max_len=100, unknown_relation="extend"):
    relations = RelationSet() if relations is None else relations
    sentences = [make_sentence(r, relations, max_len, unknown_relation, f"record {i}") for i, r in enumerate(records)]
    return Corpus(sentences, relations, sum(s.dropped for s in sentences))


def dumps_records(records):
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def write_corpus(path, sentences):
    """Write sentences (or raw record dicts) as JSON lines, atomically."""
    records = [s.to_record() if isinstance(s, Sentence) else s for s in sentences]
    write_atomic(path, dumps_records(records))


# -------------------------------------------------------------- categories


@dataclass(frozen=True)
class OverlapFlags:
    normal: bool
    epo: bool
    seo: bool


def _string_triples(triples):
    out = []
    for t in triples:
        st = t.strings() if isinstance(t, Triple) else tuple(t)
        if st not in out:
            out.append(st)
    return out


def categorize_overlap(triples):
    """Normal / EntityPairOverlap / SingleEntityOverlap flags for one sentence.

    Identical triples are collapsed first. EPO: two triples over the same
    unordered entity pair. SEO: two triples sharing at least one entity
    without having the same unordered pair.
    """
    trs = _string_triples(triples)
    epo = seo = False
    for (s1, _, o1), (s2, _, o2) in combinations(trs, 2):
        p1, p2 = frozenset((s1, o1)), frozenset((s2, o2))
        if p1 == p2:
            epo = True
        elif p1 & p2:
            seo = True
        if epo and seo:
            break
    return OverlapFlags(not (epo or seo), epo, seo)


def _n_triples(sent):
    return len(_string_triples(sent.raw_triples))


def bucket_key(n):
    if n <= 0:
        return "0"
    return str(n) if n < 5 else ">=5"


def bucket_by_triple_count(sentences):
    """Map ``"1".."4"``, ``">=5"`` (and ``"0"`` for triple-less sentences) to sentence lists."""
    buckets = {k: [] for k in BUCKETS}
    for sent in sentences:
        buckets.setdefault(bucket_key(_n_triples(sent)), []).append(sent)
    return buckets


@dataclass
class CorpusStats:
    normal: int = 0
    epo: int = 0
    seo: int = 0
    all: int = 0
    triples: int = 0
    per_n: dict = field(default_factory=lambda: {k: 0 for k in ("0",) + BUCKETS})
    relations: Counter = field(default_factory=Counter)

    def to_dict(self):
        return {
            "Normal": self.normal, "EPO": self.epo, "SEO": self.seo, "ALL": self.all,
            "triples": self.triples, "per_n": dict(self.per_n), "relations": dict(self.relations.most_common()),
        }

    def format_table(self, title="corpus"):
        rows = [("Normal", self.normal), ("EPO", self.epo), ("SEO", self.seo), ("ALL", self.all)]
        width = max(len(title), 8)
        lines = [f"{'Category':<10}{title:>{width}}"]
        lines += [f"{name:<10}{count:>{width}}" for name, count in rows]
        lines.append("")
        lines.append(f"{'N':<10}{'sentences':>{width}}")
        lines += [f"{k:<10}{v:>{width}}" for k, v in self.per_n.items()]
        return "\n".join(lines)


def corpus_stats(sentences):
    """Category counts in the style of the usual dataset-statistics table.

    EPO and SEO count every sentence carrying the flag, so a sentence may be
    counted in both. Categories use the file's raw triples, before alignment.
    """
    st = CorpusStats()
    for sent in sentences:
        flags = categorize_overlap(sent.raw_triples)
        st.all += 1
        st.normal += flags.normal
        st.epo += flags.epo
        st.seo += flags.seo
        n = _n_triples(sent)
        st.triples += n
        st.per_n[bucket_key(n)] += 1
        st.relations.update(r for _, r, _ in _string_triples(sent.raw_triples))
    return st
