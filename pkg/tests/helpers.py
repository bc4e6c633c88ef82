"""Independent oracles and small fixtures shared by the test modules.

Nothing here calls into the code under test for the quantity being checked:
the oracles are brute-force or closed-form restatements of the rules.
"""

import math
from itertools import permutations

import numpy as np

from casrel.autodiff import evaluate


# ------------------------------------------------------------ gradients


def fd_gradient(f, params, names=None, h=1e-5, max_entries=None, rng=None):
    """Central differences of scalar ``f(params)`` w.r.t. each named tensor.

    With ``max_entries`` only that many randomly chosen entries per tensor are
    perturbed; the others are left as NaN.
    """
    out = {}
    for name in names or sorted(params):
        base = params[name]
        grad = np.full(base.shape, np.nan)
        idx = list(np.ndindex(base.shape))
        if max_entries is not None and len(idx) > max_entries:
            pick = (rng or np.random.default_rng(0)).choice(len(idx), size=max_entries, replace=False)
            idx = [idx[i] for i in sorted(pick)]
        for i in idx:
            orig = base[i]
            base[i] = orig + h
            up = f(params)
            base[i] = orig - h
            down = f(params)
            base[i] = orig
            grad[i] = (up - down) / (2 * h)
        out[name] = grad
    return out


def relative_error(analytic, numeric):
    """Norm-wise ``|a - n| / max(|a|, |n|)`` over the finite entries of ``numeric``.

    Measured per tensor rather than per entry: individual entries whose true
    gradient is exactly zero (e.g. an attention key bias, which softmax
    ignores) make the per-entry ratio pure finite-difference noise.
    """
    mask = np.isfinite(numeric)
    a, n = np.asarray(analytic)[mask], np.asarray(numeric)[mask]
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def graph_loss_fn(build):
    """Turn ``build(params) -> (graph, loss_node)`` into ``params -> float``."""

    def f(params):
        g, loss = build(params)
        return float(evaluate(g)[loss])

    return f


# ------------------------------------------------------------ span matching


def brute_match_spans(starts, ends):
    """The matching rule, restated: each start pairs with the smallest end at or after it."""
    L = len(starts)
    out = []
    for i in range(L):
        if starts[i]:
            for j in range(i, L):
                if ends[j]:
                    out.append((i, j))
                    break
    return out


# ------------------------------------------------------------ overlap categories


def brute_categories(triples):
    """Pairwise predicates over distinct triples, written independently of the package."""
    distinct = []
    for t in triples:
        if tuple(t) not in distinct:
            distinct.append(tuple(t))
    epo = seo = False
    for a in range(len(distinct)):
        for b in range(len(distinct)):
            if a == b:
                continue
            s1, _, o1 = distinct[a]
            s2, _, o2 = distinct[b]
            same_pair = {s1, o1} == {s2, o2}
            shares = bool({s1, o1} & {s2, o2})
            epo |= same_pair
            seo |= shares and not same_pair
    return (not (epo or seo), epo, seo)


# ------------------------------------------------------------ metrics


def head(entity):
    toks = entity.split()
    return toks[0] if toks else ""


def oracle_counts(pred, gold, mode):
    """(TP, FP, FN) via maximum bipartite matching by exhaustive search."""
    def key(t):
        s, r, o = t
        if mode == "partial":
            return (head(s), r, head(o))
        return (" ".join(s.split()), r, " ".join(o.split()))

    pred = list(dict.fromkeys(tuple(t) for t in pred))
    gold = list(dict.fromkeys(tuple(t) for t in gold))
    best = 0
    small, big = (pred, gold) if len(pred) <= len(gold) else (gold, pred)
    for perm in permutations(range(len(big)), len(small)):
        best = max(best, sum(key(small[i]) == key(big[j]) for i, j in enumerate(perm)))
    return best, len(pred) - best, len(gold) - best


def prf(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


# ------------------------------------------------------------ likelihood


def bce_sum(p, y, clamp=1e-12):
    """``-sum(y ln p + (1-y) ln(1-p))`` with an explicit per-entry loop (math.log)."""
    total = 0.0
    for pi, yi in zip(np.ravel(p), np.ravel(y)):
        pi = min(max(float(pi), clamp), 1.0 - clamp)
        total -= math.log(pi) if yi else math.log(1.0 - pi)
    return total


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_oracle(x_pre, w_hh):
    """Step-by-step LSTM over one sequence; gate order [i, f, g, o]."""
    L, four_h = x_pre.shape
    n = four_h // 4
    h = np.zeros(n)
    c = np.zeros(n)
    out = []
    for t in range(L):
        z = x_pre[t] + h @ w_hh
        i, f, g, o = (z[k * n:(k + 1) * n] for k in range(4))
        i, f, o = sigmoid(i), sigmoid(f), sigmoid(o)
        g = np.tanh(g)
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h.copy())
    return np.array(out)


# ------------------------------------------------------------ fixtures


def tiny_model(num_sentences=20, hidden=8, kind="transformer", seed=0, num_relations=3, **enc):
    """A random small model plus the synthetic corpus it was sized for."""
    from casrel.datasets import corpus_from_records
    from casrel.encoder import EncoderConfig, Vocabulary
    from casrel.model import CasRelModel
    from casrel.synthetic import SynthConfig, generate_synthetic

    syn = generate_synthetic(SynthConfig(num_sentences=num_sentences, num_relations=num_relations, seed=seed))
    corpus = corpus_from_records(syn.records)
    vocab = Vocabulary.build(corpus)
    opts = dict(kind=kind, hidden_size=hidden, num_layers=1, num_heads=2, ffn_size=8, vocab_size=len(vocab))
    opts.update(enc)
    model = CasRelModel.initialize(EncoderConfig(**opts), corpus.relations, vocab, seed=seed)
    return model, corpus
