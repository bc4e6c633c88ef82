"""Cascade inference: subjects first, then every relation's object tagger per subject."""

import json
from dataclasses import dataclass

from .checkpoint import write_atomic
from .tagging import Span, binarize, match_spans, subject_vector, tag_object, tag_subject


@dataclass(frozen=True)
class ExtractedTriple:
    subject: str
    subject_span: Span
    relation: str
    relation_id: int
    object: str
    object_span: Span
    subject_index: int

    def key(self):
        return (self.subject, self.relation, self.object)


def _surface(tokens, span):
    return " ".join(tokens[span.start: span.end + 1])


def decode(tokens, h, model, threshold=0.5):
    """Run both cascade stages over an already-encoded sentence ``h`` (L x d)."""
    sub_params, obj_params = model.subject_params(), model.object_params()
    sub = tag_subject(h, sub_params)
    subjects = match_spans(binarize(sub.start, threshold), binarize(sub.end, threshold))
    seen, out = set(), []
    for k, s_span in enumerate(subjects):
        v_sub = subject_vector(h, s_span)
        s_text = _surface(tokens, s_span)
        for r, name in enumerate(model.relations.names):
            field = tag_object(h, v_sub, r, obj_params)
            for o_span in match_spans(binarize(field.start, threshold), binarize(field.end, threshold)):
                triple = ExtractedTriple(s_text, s_span, name, r, _surface(tokens, o_span), o_span, k)
                if triple.key() not in seen:
                    seen.add(triple.key())
                    out.append(triple)
    return out


def extract_triples(tokens, model, threshold=0.5):
    """Triples for one whitespace-tokenised sentence, deduplicated on surface strings."""
    tokens = list(tokens)[: model.config.max_len]
    if not tokens:
        return []
    (h,) = model.encode([model.token_ids(tokens)])
    return decode(tokens, h, model, threshold)


def extract_corpus(token_lists, model, threshold=0.5, chunk=32):
    """Extract from many sentences, encoding ``chunk`` of them per packed pass."""
    token_lists = [list(t)[: model.config.max_len] for t in token_lists]
    results = [[] for _ in token_lists]
    todo = [i for i, t in enumerate(token_lists) if t]
    for lo in range(0, len(todo), chunk):
        idx = todo[lo: lo + chunk]
        hs = model.encode(model.token_ids(token_lists[i]) for i in idx)
        for i, h in zip(idx, hs):
            results[i] = decode(token_lists[i], h, model, threshold)
    return results


def prediction_records(texts, predictions):
    return [
        {"text": text, "triple_list": [list(t.key()) for t in preds]}
        for text, preds in zip(texts, predictions)
    ]


def write_predictions(path, texts, predictions):
    records = prediction_records(texts, predictions)
    write_atomic(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))
    return records
