"""Triple matching and micro precision / recall / F1, with breakdowns.

``partial`` mode compares the relation and the first whitespace token ("head")
of each entity; ``exact`` mode compares the relation and full entity strings.
Both predicted and gold triples are de-duplicated per sentence before counting.
"""

from dataclasses import dataclass

from .datasets import BUCKETS, bucket_key, categorize_overlap

MODES = ("partial", "exact")
ELEMENTS = ("E1", "E2", "R", "(E1,R)", "(R,E2)", "(E1,E2)", "(E1,R,E2)")
_PROJECTIONS = {
    "E1": lambda s, r, o: (s,),
    "E2": lambda s, r, o: (o,),
    "R": lambda s, r, o: (r,),
    "(E1,R)": lambda s, r, o: (s, r),
    "(R,E2)": lambda s, r, o: (r, o),
    "(E1,E2)": lambda s, r, o: (s, o),
    "(E1,R,E2)": lambda s, r, o: (s, r, o),
}


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def entity_key(entity, mode):
    toks = entity.split()
    if mode == "partial":
        return toks[0] if toks else ""
    return " ".join(toks)


def _as_tuple(t):
    return t.key() if hasattr(t, "key") else tuple(t)


def triple_key(triple, mode):
    s, r, o = _as_tuple(triple)
    return (entity_key(s, mode), r, entity_key(o, mode))


def triple_match(pred, gold, mode="partial"):
    _check_mode(mode)
    return triple_key(pred, mode) == triple_key(gold, mode)


def _dedup(triples):
    out, seen = [], set()
    for t in triples:
        t = _as_tuple(t)
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def scores(self):
        return self.precision, self.recall, self.f1

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def count_sentence(pred, gold, mode="partial"):
    """Greedy one-to-one matching: each prediction takes the first unmatched gold it matches."""
    pred, gold = _dedup(pred), _dedup(gold)
    gold_keys = [triple_key(g, mode) for g in gold]
    used = [False] * len(gold)
    tp = 0
    for p in pred:
        pk = triple_key(p, mode)
        for j, gk in enumerate(gold_keys):
            if not used[j] and gk == pk:
                used[j] = True
                tp += 1
                break
    return Counts(tp, len(pred) - tp, len(gold) - tp)


def micro_counts(preds, golds, mode="partial"):
    _check_mode(mode)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} prediction lists for {len(golds)} gold lists")
    total = Counts()
    for p, g in zip(preds, golds):
        total = total + count_sentence(p, g, mode)
    return total


def score_micro(preds, golds, mode="partial"):
    """Micro ``(precision, recall, f1)`` over aligned per-sentence triple lists."""
    return micro_counts(preds, golds, mode).scores()


def score_breakdowns(preds, golds, mode="partial"):
    """Micro counts restricted to overlap categories and triple-count buckets.

    Subsets come from the gold triples. Categories may share sentences (EPO and
    SEO); N buckets partition the sentences that have at least one triple.
    Empty subsets map to ``None``.
    """
    _check_mode(mode)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} prediction lists for {len(golds)} gold lists")
    overlap = {"normal": [], "epo": [], "seo": []}
    by_n = {k: [] for k in ("0",) + BUCKETS}
    for i, g in enumerate(golds):
        flags = categorize_overlap(_dedup(g))
        for name in overlap:
            if getattr(flags, name):
                overlap[name].append(i)
        by_n[bucket_key(len(_dedup(g)))].append(i)

    def restrict(idx):
        if not idx:
            return None
        return micro_counts([preds[i] for i in idx], [golds[i] for i in idx], mode)

    return {
        "overlap": {k: restrict(v) for k, v in overlap.items()},
        "n": {k: restrict(v) for k, v in by_n.items()},
    }


def element_analysis(preds, golds, mode="partial"):
    """Micro counts of each projected element pattern (E1, R, (E1,R), ...)."""
    _check_mode(mode)
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} prediction lists for {len(golds)} gold lists")
    out = {}
    for name in ELEMENTS:
        proj = _PROJECTIONS[name]
        total = Counts()
        for p, g in zip(preds, golds):
            ps = {proj(*triple_key(t, mode)) for t in p}
            gs = {proj(*triple_key(t, mode)) for t in g}
            tp = len(ps & gs)
            total = total + Counts(tp, len(ps) - tp, len(gs) - tp)
        out[name] = total
    return out


@dataclass
class EvalReport:
    mode: str
    overall: Counts
    overlap: dict
    n: dict
    elements: dict

    def to_dict(self):
        def conv(c):
            return None if c is None else c.to_dict()

        return {
            "mode": self.mode,
            "overall": conv(self.overall),
            "overlap": {k: conv(v) for k, v in self.overlap.items()},
            "n": {k: conv(v) for k, v in self.n.items()},
            "elements": {k: conv(v) for k, v in self.elements.items()},
        }

    def format_table(self):
        def row(label, c):
            if c is None:
                return f"{label:<12}{'-':>8}{'-':>8}{'-':>8}{'-':>7}{'-':>7}{'-':>7}"
            return (f"{label:<12}{c.precision:>8.4f}{c.recall:>8.4f}{c.f1:>8.4f}"
                    f"{c.tp:>7d}{c.fp:>7d}{c.fn:>7d}")

        head = f"{'':<12}{'Prec.':>8}{'Rec.':>8}{'F1':>8}{'TP':>7}{'FP':>7}{'FN':>7}"
        lines = [f"mode: {self.mode}", head, row("overall", self.overall), "", "overlap pattern", head]
        lines += [row(k.upper() if k != "normal" else "Normal", v) for k, v in self.overlap.items()]
        lines += ["", "triples per sentence (N)", head]
        lines += [row(f"N={k}", v) for k, v in self.n.items()]
        lines += ["", "triple elements", head]
        lines += [row(k, v) for k, v in self.elements.items()]
        return "\n".join(lines)


def evaluate_predictions(preds, golds, mode="partial"):
    parts = score_breakdowns(preds, golds, mode)
    return EvalReport(mode, micro_counts(preds, golds, mode), parts["overlap"], parts["n"],
                      element_analysis(preds, golds, mode))
