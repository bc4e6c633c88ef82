#!/usr/bin/env python3
"""Time the numpy and numba versions of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeats N] [--tokens T] [--hidden D] [--end-to-end]

The first numba call (compilation, or loading from the on-disk cache) is timed
separately and excluded from the per-call figures. ``--end-to-end`` also times
one BiLSTM training step in two subprocesses, with and without
``CASREL_DISABLE_JIT=1``, since that flag is read at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from casrel import kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def packed_segments(total, rng, lo=8, hi=40):
    starts, ends, pos = [], [], 0
    while pos < total:
        n = min(int(rng.integers(lo, hi + 1)), total - pos)
        starts.append(pos)
        pos += n
        ends.append(pos)
    return np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64)


def cases(tokens, hidden, rng):
    s, e = packed_segments(tokens, rng)
    pre = rng.normal(size=(tokens, 4 * hidden))
    w_hh = rng.normal(scale=0.1, size=(hidden, 4 * hidden))
    H, C, A = kernels.lstm_forward_numpy(pre, w_hh, s, e, False)
    dH = rng.normal(size=H.shape)
    x = rng.normal(size=(tokens, hidden))
    g, b = rng.normal(size=hidden), rng.normal(size=hidden)
    _, xhat, rstd = kernels.layer_norm_forward_numpy(x, g, b, 1e-5)
    dy = rng.normal(size=x.shape)
    st = (rng.random(tokens) < 0.2).astype(np.int64)
    en = (rng.random(tokens) < 0.2).astype(np.int64)
    return [
        ("lstm_forward", kernels.lstm_forward_numpy, kernels.lstm_forward_numba, (pre, w_hh, s, e, False)),
        ("lstm_backward", kernels.lstm_backward_numpy, kernels.lstm_backward_numba, (dH, H, C, A, w_hh, s, e, False)),
        ("layer_norm_forward", kernels.layer_norm_forward_numpy, kernels.layer_norm_forward_numba, (x, g, b, 1e-5)),
        ("layer_norm_backward", kernels.layer_norm_backward_numpy, kernels.layer_norm_backward_numba, (dy, xhat, rstd, g)),
        ("match_spans", kernels.match_spans_numpy, kernels.match_spans_numba, (st, en)),
    ]


def max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x, float) - np.asarray(y, float)), initial=0.0)) for x, y in zip(a, b))


_STEP = """
import time, numpy as np
from casrel import kernels
from casrel.encoder import EncoderConfig, Vocabulary
from casrel.model import CasRelModel
from casrel.synthetic import SynthConfig, generate_synthetic
from casrel.datasets import corpus_from_records
from casrel.training import batch_loss_and_grad
syn = generate_synthetic(SynthConfig(num_sentences=24, seed=0))
corpus = corpus_from_records(syn.records)
vocab = Vocabulary.build(corpus)
cfg = EncoderConfig(kind="bilstm", vocab_size=len(vocab), hidden_size={hidden})
model = CasRelModel.initialize(cfg, corpus.relations, vocab, seed=0)
ex = [model.example(s) for s in corpus]
batch_loss_and_grad(model, ex)
t = []
for _ in range({repeats}):
    t0 = time.perf_counter(); batch_loss_and_grad(model, ex); t.append(time.perf_counter() - t0)
print(kernels.BACKEND, min(t))
"""


def end_to_end(hidden, repeats):
    code = _STEP.format(hidden=hidden, repeats=repeats)
    for disable in ("0", "1"):
        env = dict(os.environ, CASREL_DISABLE_JIT=disable)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  bilstm loss+grad, 24 sentences, backend={backend:<6} {float(secs) * 1e3:9.2f} ms")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--tokens", type=int, default=2000, help="packed tokens per kernel call")
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"numba kernels active by default: {kernels.JIT_ENABLED}  (tokens={args.tokens}, hidden={args.hidden})")
    print(f"{'kernel':<22}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'compile s':>11}{'max |diff|':>12}")
    for name, f_np, f_nb, inputs in cases(args.tokens, args.hidden, rng):
        t0 = time.perf_counter()
        out_nb = f_nb(*inputs)
        compile_s = time.perf_counter() - t0
        out_np = f_np(*inputs)
        t_np = best_of(lambda: f_np(*inputs), args.repeats)
        t_nb = best_of(lambda: f_nb(*inputs), args.repeats)
        print(f"{name:<22}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x{compile_s:>11.2f}"
              f"{max_diff(out_np, out_nb):>12.2e}")
    if args.end_to_end:
        print("end to end:")
        end_to_end(args.hidden, max(3, args.repeats // 4))


if __name__ == "__main__":
    main()
