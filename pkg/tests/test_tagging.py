import itertools
import math

import numpy as np
import pytest

from casrel.tagging import (
    ObjectTaggerParams,
    Span,
    SubjectTaggerParams,
    TagField,
    TaggingError,
    binarize,
    build_gold_tags,
    match_spans,
    span_log_likelihood,
    subject_vector,
    tag_object,
    tag_objects,
    tag_subject,
)
from helpers import brute_match_spans


def _sub(W_start, b_start, W_end=None, b_end=0.0):
    W_start = np.asarray(W_start, float)
    W_end = np.zeros_like(W_start) if W_end is None else np.asarray(W_end, float)
    return SubjectTaggerParams(W_start, float(b_start), W_end, float(b_end))


def _obj(R, d, **overrides):
    p = ObjectTaggerParams(np.zeros((R, d)), np.zeros(R), np.zeros((R, d)), np.zeros(R))
    for k, v in overrides.items():
        getattr(p, k)[...] = v
    return p


# ------------------------------------------------------------ taggers


def test_zero_subject_tagger_gives_half():
    f = tag_subject(np.random.default_rng(0).normal(size=(5, 4)), _sub(np.zeros(4), 0.0))
    assert np.all(f.start == 0.5) and np.all(f.end == 0.5)


def test_saturated_start_bias():
    f = tag_subject(np.random.default_rng(0).normal(size=(5, 4)), _sub(np.zeros(4), 20.0))
    assert np.all(f.start > 0.999999)


def test_subject_dot_product_by_hand():
    f = tag_subject(np.array([[1.0, -1.0]]), _sub([1.0, 1.0], 0.0))
    assert f.start[0] == 0.5


def test_object_with_zero_subject_vector_is_subject_formula():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(6, 3))
    p = ObjectTaggerParams(rng.normal(size=(2, 3)), rng.normal(size=2), rng.normal(size=(2, 3)), rng.normal(size=2))
    for r in range(2):
        f = tag_object(h, np.zeros(3), r, p)
        g = tag_subject(h, SubjectTaggerParams(p.W_start[r], p.b_start[r], p.W_end[r], p.b_end[r]))
        np.testing.assert_array_equal(f.start, g.start)
        np.testing.assert_array_equal(f.end, g.end)


def test_zero_object_weights_half_everywhere():
    h = np.random.default_rng(2).normal(size=(4, 3))
    p = _obj(3, 3)
    for r in range(3):
        f = tag_object(h, np.ones(3), r, p)
        assert np.all(f.start == 0.5) and np.all(f.end == 0.5)


def test_object_by_hand():
    p = _obj(1, 2, W_start=[[1.0, 1.0]], b_start=[-2.0])
    f = tag_object(np.array([[1.0, 0.0]]), np.array([0.0, 1.0]), 0, p)
    assert f.start[0] == 0.5


def test_tag_objects_matches_per_relation_calls():
    rng = np.random.default_rng(3)
    h, v = rng.normal(size=(5, 4)), rng.normal(size=4)
    p = ObjectTaggerParams(rng.normal(size=(3, 4)), rng.normal(size=3), rng.normal(size=(3, 4)), rng.normal(size=3))
    starts, ends = tag_objects(h, v, p)
    for r in range(3):
        f = tag_object(h, v, r, p)
        np.testing.assert_allclose(starts[r], f.start, rtol=1e-14)
        np.testing.assert_allclose(ends[r], f.end, rtol=1e-14)


def test_tagger_errors():
    p = _obj(2, 3)
    with pytest.raises(TaggingError):
        tag_object(np.zeros((4, 3)), np.zeros(3), 2, p)
    with pytest.raises(TaggingError):
        tag_object(np.zeros((4, 3)), np.zeros(2), 0, p)
    with pytest.raises(TaggingError):
        tag_subject(np.zeros((4, 2)), _sub(np.zeros(3), 0.0))


def test_params_from_flat_dict_layout():
    W = np.arange(12.0).reshape(3, 4)  # d=3, R=2: columns [start r0, start r1, end r0, end r1]
    p = ObjectTaggerParams.from_params({"object.W": W, "object.b": np.array([1.0, 2.0, 3.0, 4.0])})
    np.testing.assert_array_equal(p.W_start[1], W[:, 1])
    np.testing.assert_array_equal(p.W_end[0], W[:, 2])
    assert p.b_end[1] == 4.0
    s = SubjectTaggerParams.from_params({"subject.W": W[:, :2], "subject.b": np.array([5.0, 6.0])})
    np.testing.assert_array_equal(s.W_end, W[:, 1])
    assert s.b_start == 5.0


# ------------------------------------------------------------ binarize


@pytest.mark.parametrize("p, tau, want", [
    ((0.5, 0.5), 0.5, (0, 0)),
    ((0.9, 0.1), 0.5, (1, 0)),
    ((0.6, 0.4), 0.39, (1, 1)),
])
def test_binarize_examples(p, tau, want):
    assert tuple(binarize(np.array(p), tau)) == want


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.2])
def test_binarize_threshold_range(tau):
    with pytest.raises(TaggingError):
        binarize(np.array([0.3]), tau)


# ------------------------------------------------------------ span matching


def _tags(L, positions):
    t = np.zeros(L, dtype=np.int64)
    t[list(positions)] = 1
    return t


@pytest.mark.parametrize("starts, ends, want", [
    ({0}, {2}, [(0, 2)]),
    ({0, 5}, {2, 7}, [(0, 2), (5, 7)]),
    ({0, 1}, {3}, [(0, 3), (1, 3)]),
    ({4}, {2}, []),
])
def test_match_spans_examples(starts, ends, want):
    assert [tuple(s) for s in match_spans(_tags(8, starts), _tags(8, ends))] == want


def test_match_spans_exhaustive_small():
    for L in range(0, 7):
        for st in itertools.product((0, 1), repeat=L):
            for en in itertools.product((0, 1), repeat=L):
                got = [tuple(s) for s in match_spans(np.array(st, dtype=np.int64), np.array(en, dtype=np.int64))]
                assert got == brute_match_spans(st, en), (st, en)


def test_match_spans_random_long():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        L = int(rng.integers(7, 13))
        st = rng.integers(0, 2, size=L)
        en = rng.integers(0, 2, size=L)
        spans = match_spans(st, en)
        assert [tuple(s) for s in spans] == brute_match_spans(st, en)
        assert all(0 <= s.start <= s.end < L for s in spans)


def test_match_spans_length_mismatch():
    with pytest.raises(TaggingError):
        match_spans(np.zeros(3), np.zeros(4))


# ------------------------------------------------------------ subject vector


def test_subject_vector_examples():
    h = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(subject_vector(h, Span(1, 1)), h[1])
    np.testing.assert_array_equal(subject_vector(h, Span(1, 2)), h[1])
    np.testing.assert_array_equal(subject_vector(h, Span(0, 1)), [0.5, 0.5])
    with pytest.raises(TaggingError):
        subject_vector(h, Span(2, 3))


def test_span_invariants():
    with pytest.raises(ValueError):
        Span(3, 2)
    with pytest.raises(ValueError):
        Span(-1, 0)
    assert len(Span(2, 4)) == 3 and tuple(Span(2, 4)) == (2, 4)


# ------------------------------------------------------------ gold tags


def test_gold_tags_empty_sentence():
    gold = build_gold_tags(4, [], 3)
    assert not gold.subject.start.any() and not gold.subject.end.any()
    assert gold.objects == {}


def test_gold_tags_single_triple():
    gold = build_gold_tags(6, [((0, 1), 0, (4, 4))], 2)
    assert list(gold.subject.start) == [1, 0, 0, 0, 0, 0]
    assert list(gold.subject.end) == [0, 1, 0, 0, 0, 0]
    f0 = gold.object_field(Span(0, 1), 0)
    assert list(f0.start) == [0, 0, 0, 0, 1, 0] and list(f0.end) == [0, 0, 0, 0, 1, 0]
    f1 = gold.object_field(Span(0, 1), 1)
    assert not f1.start.any() and not f1.end.any()


def test_gold_tags_shared_subject():
    gold = build_gold_tags(7, [((0, 0), 0, (2, 3)), ((0, 0), 1, (5, 6))], 2)
    assert list(gold.object_field(Span(0, 0), 0).start) == [0, 0, 1, 0, 0, 0, 0]
    assert list(gold.object_field(Span(0, 0), 1).end) == [0, 0, 0, 0, 0, 0, 1]


def test_gold_tags_errors():
    with pytest.raises(TaggingError):
        build_gold_tags(3, [((0, 0), 0, (2, 3))], 1)
    with pytest.raises(TaggingError):
        build_gold_tags(3, [((0, 0), 1, (2, 2))], 1)


def test_gold_tags_round_trip_through_decoding():
    rng = np.random.default_rng(8)
    for _ in range(300):
        L = int(rng.integers(3, 12))
        # non-overlapping subject spans, arbitrary object spans
        cuts = sorted(rng.choice(np.arange(L + 1), size=4, replace=False))
        subjects = [Span(int(cuts[0]), int(cuts[1]) - 1), Span(int(cuts[2]), int(cuts[3]) - 1)]
        subjects = [s for s in subjects if s.start <= s.end]
        triples = []
        for s in subjects:
            for r in rng.choice(3, size=int(rng.integers(1, 3)), replace=False):
                a = int(rng.integers(0, L))
                triples.append((s, int(r), Span(a, int(rng.integers(a, min(L, a + 3))))))
        if not triples:
            continue
        gold = build_gold_tags(L, triples, 3)
        assert set(match_spans(gold.subject.start, gold.subject.end)) == {t[0] for t in triples}
        for s in {t[0] for t in triples}:
            for r in range(3):
                f = gold.object_field(s, r)
                assert set(match_spans(f.start, f.end)) == {o for sub, rel, o in triples if sub == s and rel == r}


# ------------------------------------------------------------ likelihood


def test_likelihood_all_half():
    probs = TagField(np.full(3, 0.5), np.full(3, 0.5))
    gold = TagField(np.array([1, 0, 0]), np.array([0, 0, 1]))
    assert span_log_likelihood(probs, gold) == pytest.approx(6 * math.log(0.5), rel=1e-15)
    assert span_log_likelihood(probs, gold) == pytest.approx(-4.158883, abs=1e-6)


def test_likelihood_all_zero_gold():
    probs = TagField(np.full(3, 0.4), np.full(3, 0.4))
    assert span_log_likelihood(probs, TagField.zeros(3)) == pytest.approx(-3.064954, abs=1e-6)


def test_likelihood_perfect_prediction_is_near_zero():
    y = np.array([1, 0, 1, 0])
    val = span_log_likelihood(TagField(y.astype(float), 1.0 - y), TagField(y, 1 - y))
    assert -1e-10 < val <= 0.0


def test_likelihood_length_mismatch():
    with pytest.raises(TaggingError):
        span_log_likelihood(TagField(np.full(3, 0.5), np.full(3, 0.5)), TagField.zeros(4))
