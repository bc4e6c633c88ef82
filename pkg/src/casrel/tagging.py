"""Binary start/end taggers, span decoding and the span-tagging likelihood.

These are plain numpy functions over one encoded sentence. Training builds the
same computations into an autodiff graph (see :mod:`casrel.model`); inference
and the likelihood-decomposition tests use the functions here.

Parameter layout in the model's flat parameter map:

* ``subject.W``: d x 2, columns ``[start, end]``; ``subject.b``: 2
* ``object.W``: d x 2|R|, column ``r`` is relation r's start weight and
  column ``|R| + r`` its end weight; ``object.b``: 2|R| in the same order
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import BCE_CLAMP


class TaggingError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise TaggingError(f"invalid span ({self.start}, {self.end})")

    def __iter__(self):
        yield self.start
        yield self.end

    def __len__(self):
        return self.end - self.start + 1


@dataclass
class TagField:
    """Per-token start/end sequences: probabilities or 0/1 tags."""

    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        self.start = np.asarray(self.start)
        self.end = np.asarray(self.end)
        if self.start.shape != self.end.shape or self.start.ndim != 1:
            raise TaggingError(f"start/end length mismatch: {self.start.shape} vs {self.end.shape}")

    def __len__(self):
        return self.start.shape[0]

    @classmethod
    def zeros(cls, length):
        return cls(np.zeros(length, dtype=np.int64), np.zeros(length, dtype=np.int64))


@dataclass
class SubjectTaggerParams:
    W_start: np.ndarray
    b_start: float
    W_end: np.ndarray
    b_end: float

    @classmethod
    def from_params(cls, params):
        W, b = params["subject.W"], params["subject.b"]
        return cls(W[:, 0], float(b[0]), W[:, 1], float(b[1]))


@dataclass
class ObjectTaggerParams:
    """Row ``r`` of each array holds relation r's tagger."""

    W_start: np.ndarray
    b_start: np.ndarray
    W_end: np.ndarray
    b_end: np.ndarray

    @property
    def num_relations(self):
        return self.W_start.shape[0]

    @classmethod
    def from_params(cls, params):
        W, b = params["object.W"], params["object.b"]
        R = W.shape[1] // 2
        return cls(W[:, :R].T, b[:R], W[:, R:].T, b[R:])


def init_head_params(hidden_size, num_relations, rng, scale=0.1):
    d, R = hidden_size, num_relations
    return {
        "subject.W": rng.uniform(-scale, scale, size=(d, 2)),
        "subject.b": rng.uniform(-scale, scale, size=2),
        "object.W": rng.uniform(-scale, scale, size=(d, 2 * R)),
        "object.b": rng.uniform(-scale, scale, size=2 * R),
    }


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _rows(h):
    h = h.h if hasattr(h, "h") else h
    return np.asarray(h, dtype=np.float64)


def tag_subject(h, params):
    x = _rows(h)
    if x.ndim != 2 or x.shape[1] != params.W_start.shape[0] or params.W_end.shape != params.W_start.shape:
        raise TaggingError(f"encoded sentence {x.shape} does not match tagger dimension {params.W_start.shape}")
    return TagField(sigmoid(x @ params.W_start + params.b_start), sigmoid(x @ params.W_end + params.b_end))


def tag_object(h, v_sub, relation, params):
    x = _rows(h)
    v_sub = np.asarray(v_sub, dtype=np.float64).reshape(-1)
    if not 0 <= relation < params.num_relations:
        raise TaggingError(f"unknown relation id {relation}")
    d = params.W_start.shape[1]
    if x.ndim != 2 or x.shape[1] != d or v_sub.shape != (d,):
        raise TaggingError(f"dimension mismatch: x {x.shape}, v_sub {v_sub.shape}, tagger d={d}")
    z = x + v_sub
    return TagField(
        sigmoid(z @ params.W_start[relation] + params.b_start[relation]),
        sigmoid(z @ params.W_end[relation] + params.b_end[relation]),
    )


def tag_objects(h, v_sub, params):
    """All relations at once: two |R| x L probability matrices (start, end)."""
    z = _rows(h) + np.asarray(v_sub, dtype=np.float64).reshape(1, -1)
    return sigmoid(params.W_start @ z.T + params.b_start[:, None]), sigmoid(params.W_end @ z.T + params.b_end[:, None])


def binarize(probs, threshold=0.5):
    """1 where ``p > threshold`` (strictly), else 0."""
    if not 0.0 < threshold < 1.0:
        raise TaggingError(f"threshold must be in (0, 1), got {threshold}")
    return (np.asarray(probs) > threshold).astype(np.int64)


def binarize_field(field, threshold=0.5):
    return TagField(binarize(field.start, threshold), binarize(field.end, threshold))


def match_spans(start_tags, end_tags):
    """Pair every start with the nearest end at or after it; ends may be reused.

    Starts with no end to their right are dropped. Output is ordered by start.
    """
    start_tags = np.asarray(start_tags)
    end_tags = np.asarray(end_tags)
    if start_tags.shape != end_tags.shape:
        raise TaggingError(f"tag length mismatch: {start_tags.shape} vs {end_tags.shape}")
    return [Span(int(s), int(e)) for s, e in kernels.match_spans(start_tags, end_tags)]


def subject_vector(h, span):
    x = _rows(h)
    s, e = span
    if not 0 <= s <= e < x.shape[0]:
        raise TaggingError(f"span ({s}, {e}) out of range for {x.shape[0]} tokens")
    return x[s:e + 1].mean(axis=0)


@dataclass
class GoldTags:
    """Gold supervision for one sentence.

    ``objects[subject_span]`` holds start/end tag matrices of shape |R| x L;
    rows of relations the subject does not lead stay all zero (null object).
    """

    subject: TagField
    objects: dict

    def object_field(self, subject_span, relation):
        starts, ends = self.objects[subject_span]
        return TagField(starts[relation], ends[relation])


def build_gold_tags(length, triples, num_relations):
    """Gold tags from ``(subject_span, relation_id, object_span)`` triples."""
    subject = TagField.zeros(length)
    objects = {}
    for sub, rel, obj in triples:
        sub, obj = Span(*sub), Span(*obj)
        if sub.end >= length or obj.end >= length:
            raise TaggingError(f"span out of range for {length} tokens: {sub}, {obj}")
        if not 0 <= rel < num_relations:
            raise TaggingError(f"unknown relation id {rel}")
        subject.start[sub.start] = 1
        subject.end[sub.end] = 1
        if sub not in objects:
            objects[sub] = (np.zeros((num_relations, length), dtype=np.int64),
                            np.zeros((num_relations, length), dtype=np.int64))
        starts, ends = objects[sub]
        starts[rel, obj.start] = 1
        ends[rel, obj.end] = 1
    return GoldTags(subject, dict(sorted(objects.items())))


def span_log_likelihood(probs, gold):
    """``sum_t sum_i y ln p + (1 - y) ln(1 - p)`` over start and end, clamped."""
    if len(probs) != len(gold):
        raise TaggingError(f"length mismatch: {len(probs)} vs {len(gold)}")
    total = 0.0
    for p, y in ((probs.start, gold.start), (probs.end, gold.end)):
        p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
        y = np.asarray(y, dtype=np.float64)
        total += float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    return total
