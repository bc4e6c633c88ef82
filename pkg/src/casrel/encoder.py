"""Token encoders: embeddings followed by a transformer stack or a BiLSTM.

Sentences are processed *packed*: the token rows of a whole mini-batch are
stacked into one T x d matrix. Positions restart at every sentence, attention
is masked block-diagonally and the LSTM state is reset at sentence starts, so
a packed batch computes exactly what encoding each sentence alone would.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Graph, evaluate

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
_MASKED = -1e30


class EncoderError(ValueError):
    pass


@dataclass
class EncoderConfig:
    kind: str = "transformer"
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 4
    max_len: int = 100
    vocab_size: int = 2
    ffn_size: int = 64
    dropout: float = 0.0
    init_scale: float = 0.1
    # None: token embeddings use init_scale like everything else
    token_init_scale: float | None = None
    position_init: str = "uniform"

    def __post_init__(self):
        if self.kind not in ("transformer", "bilstm"):
            raise EncoderError(f"unknown encoder kind {self.kind!r}")
        if self.hidden_size <= 0 or self.num_layers < 0 or self.max_len < 1 or self.vocab_size < 2:
            raise EncoderError(f"invalid encoder sizes: {self}")
        if self.num_heads <= 0 or self.hidden_size % self.num_heads:
            raise EncoderError(f"head count {self.num_heads} does not divide hidden size {self.hidden_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise EncoderError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.position_init not in ("uniform", "sinusoidal"):
            raise EncoderError(f"position_init must be 'uniform' or 'sinusoidal', got {self.position_init!r}")
        if self.init_scale < 0 or (self.token_init_scale is not None and self.token_init_scale < 0):
            raise EncoderError("init scales must be non-negative")

    def to_dict(self):
        return asdict(self)


@dataclass
class EncodedSentence:
    h: np.ndarray

    @property
    def length(self):
        return self.h.shape[0]


class Vocabulary:
    """Whitespace-token vocabulary; id 0 is padding, id 1 the unknown token."""

    def __init__(self, tokens=()):
        self.tokens = [PAD_TOKEN, UNK_TOKEN]
        self.index = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            self.add(tok)

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def add(self, token):
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    @classmethod
    def build(cls, sentences):
        vocab = cls()
        for sent in sentences:
            for tok in sent.tokens:
                vocab.add(tok)
        return vocab

    def encode(self, tokens):
        return np.array([self.index.get(t, UNK) for t in tokens], dtype=np.int64)

    def save(self, path):
        from .checkpoint import write_atomic

        write_atomic(path, "".join(t + "\n" for t in self.tokens))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise EncoderError(f"{path}: first two lines must be {PAD_TOKEN!r} and {UNK_TOKEN!r}")
        vocab = cls()
        for tok in lines[2:]:
            if tok in vocab.index:
                raise EncoderError(f"{path}: duplicate token {tok!r}")
            vocab.add(tok)
        return vocab


# ------------------------------------------------------------------ params


def sinusoidal_positions(length, d):
    """Fixed sine/cosine table: even columns sin, odd columns cos, wavelengths up to 10^4."""
    pos = np.arange(length)[:, None]
    freq = 10000.0 ** (-2.0 * np.arange((d + 1) // 2) / d)
    table = np.zeros((length, d))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d // 2])
    return table


def init_encoder_params(config, rng):
    """Uniform(-s, s) weights; layer-norm gains start at 1 and biases at 0.

    ``position_init="sinusoidal"`` starts the (still trainable) position table
    from :func:`sinusoidal_positions` instead of uniform noise.
    """
    d, s = config.hidden_size, config.init_scale

    def u(*shape, scale=s):
        return rng.uniform(-scale, scale, size=shape)

    tok_scale = s if config.token_init_scale is None else config.token_init_scale
    p = {"enc.tok_emb": u(config.vocab_size, d, scale=tok_scale), "enc.pos_emb": u(config.max_len, d)}
    if config.position_init == "sinusoidal":
        p["enc.pos_emb"] = sinusoidal_positions(config.max_len, d)
    for k in range(config.num_layers):
        if config.kind == "transformer":
            pre = f"enc.blk{k}."
            f = config.ffn_size
            p[pre + "ln1.g"] = np.ones(d)
            p[pre + "ln1.b"] = np.zeros(d)
            p[pre + "attn.W_qkv"] = u(d, 3 * d)
            p[pre + "attn.b_qkv"] = u(3 * d)
            p[pre + "attn.W_o"] = u(d, d)
            p[pre + "attn.b_o"] = u(d)
            p[pre + "ln2.g"] = np.ones(d)
            p[pre + "ln2.b"] = np.zeros(d)
            p[pre + "ffn.W1"] = u(d, f)
            p[pre + "ffn.b1"] = u(f)
            p[pre + "ffn.W2"] = u(f, d)
            p[pre + "ffn.b2"] = u(d)
        else:
            pre = f"enc.lstm{k}."
            for direction in ("fwd", "bwd"):
                p[pre + direction + ".W_ih"] = u(d, 4 * d)
                p[pre + direction + ".W_hh"] = u(d, 4 * d)
                p[pre + direction + ".b"] = u(4 * d)
            p[pre + "proj.W"] = u(2 * d, d)
            p[pre + "proj.b"] = u(d)
    return p


# ------------------------------------------------------------------ packing


@dataclass
class Packed:
    ids: np.ndarray
    positions: np.ndarray
    seg_starts: np.ndarray
    seg_ends: np.ndarray

    @property
    def total(self):
        return int(self.ids.size)

    def attention_mask(self):
        if len(self.seg_starts) <= 1:
            return None
        seg = np.repeat(np.arange(len(self.seg_starts)), self.seg_ends - self.seg_starts)
        return np.where(seg[:, None] == seg[None, :], 0.0, _MASKED)


def pack(sequences, config):
    """Stack token-id sequences into one packed batch, validating ids and lengths."""
    ids, positions, starts, ends = [], [], [], []
    offset = 0
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if seq.size == 0:
            raise EncoderError("cannot encode an empty sentence")
        if seq.size > config.max_len:
            raise EncoderError(f"sentence of {seq.size} tokens exceeds max length {config.max_len}; truncate first")
        if seq.min() < 0 or seq.max() >= config.vocab_size:
            raise EncoderError(f"token id out of range [0, {config.vocab_size})")
        ids.append(seq)
        positions.append(np.arange(seq.size))
        starts.append(offset)
        offset += seq.size
        ends.append(offset)
    return Packed(
        np.concatenate(ids), np.concatenate(positions),
        np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64),
    )


# ----------------------------------------------------------- graph builders


def embed_graph(g, packed):
    tok = g.take(g.param("enc.tok_emb"), packed.ids)
    pos = g.take(g.param("enc.pos_emb"), packed.positions)
    return g.add(tok, pos)


def _dropout(g, x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(g.shape(x)) >= rate) / (1.0 - rate)
    return g.mul(x, g.const(keep))


def transformer_graph(g, x, config, mask=None, dropout_rng=None):
    """Pre-norm blocks: ``x + MHA(LN(x))`` then ``x + FFN(LN(x))``."""
    d, heads = config.hidden_size, config.num_heads
    dh = d // heads
    mask_node = g.const(mask) if mask is not None else None
    for k in range(config.num_layers):
        P = lambda name: g.param(f"enc.blk{k}.{name}")  # noqa: E731
        a = g.layer_norm(x, P("ln1.g"), P("ln1.b"))
        qkv = g.affine(a, P("attn.W_qkv"), P("attn.b_qkv"))
        outs = []
        for hd in range(heads):
            q = g.cols(qkv, hd * dh, (hd + 1) * dh)
            kk = g.cols(qkv, d + hd * dh, d + (hd + 1) * dh)
            v = g.cols(qkv, 2 * d + hd * dh, 2 * d + (hd + 1) * dh)
            scores = g.scale(g.matmul(q, g.transpose(kk)), 1.0 / np.sqrt(dh))
            if mask_node is not None:
                scores = g.add(scores, mask_node)
            outs.append(g.matmul(g.softmax(scores), v))
        att = outs[0] if heads == 1 else g.concat(outs, axis=1)
        att = g.affine(att, P("attn.W_o"), P("attn.b_o"))
        x = g.add(x, _dropout(g, att, config.dropout, dropout_rng))
        a = g.layer_norm(x, P("ln2.g"), P("ln2.b"))
        ff = g.affine(g.gelu(g.affine(a, P("ffn.W1"), P("ffn.b1"))), P("ffn.W2"), P("ffn.b2"))
        x = g.add(x, _dropout(g, ff, config.dropout, dropout_rng))
    return x


def bilstm_graph(g, x, config, seg_starts, seg_ends, dropout_rng=None):
    """Stacked BiLSTM; each layer concatenates both directions and projects back to d."""
    for k in range(config.num_layers):
        P = lambda name: g.param(f"enc.lstm{k}.{name}")  # noqa: E731
        fwd = g.lstm(g.affine(x, P("fwd.W_ih"), P("fwd.b")), P("fwd.W_hh"), seg_starts, seg_ends)
        bwd = g.lstm(g.affine(x, P("bwd.W_ih"), P("bwd.b")), P("bwd.W_hh"), seg_starts, seg_ends, reverse=True)
        x = g.affine(g.concat([fwd, bwd], axis=1), P("proj.W"), P("proj.b"))
        x = _dropout(g, x, config.dropout, dropout_rng)
    return x


def encoder_graph(g, config, packed, dropout_rng=None):
    """Add the full encoder for ``packed`` to ``g``; returns the T x d output node."""
    h0 = embed_graph(g, packed)
    if config.kind == "transformer":
        return transformer_graph(g, h0, config, packed.attention_mask(), dropout_rng)
    return bilstm_graph(g, h0, config, packed.seg_starts, packed.seg_ends, dropout_rng)


# ------------------------------------------------------ array-level wrappers


def embed(tokens, params):
    """``h0[i] = W_s[token_i] + W_p[i]`` for a single sentence."""
    tokens = np.asarray(tokens, dtype=np.int64)
    tok_emb, pos_emb = params["enc.tok_emb"], params["enc.pos_emb"]
    if tokens.size > pos_emb.shape[0]:
        raise EncoderError(f"sentence of {tokens.size} tokens exceeds max length {pos_emb.shape[0]}; truncate first")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= tok_emb.shape[0]):
        raise EncoderError(f"token id out of range [0, {tok_emb.shape[0]})")
    return tok_emb[tokens] + pos_emb[: tokens.size]


def _check_h0(h0, config):
    h0 = np.asarray(h0, dtype=np.float64)
    if h0.ndim != 2 or h0.shape[1] != config.hidden_size:
        raise EncoderError(f"h0 has shape {h0.shape}, expected L x {config.hidden_size}")
    return h0


def encode_transformer(h0, params, config):
    if config.kind != "transformer":
        raise EncoderError("encode_transformer needs a transformer config")
    h0 = _check_h0(h0, config)
    g = Graph(params)
    out = transformer_graph(g, g.const(h0), config)
    return EncodedSentence(evaluate(g)[out])


def encode_bilstm(h0, params, config):
    if config.kind != "bilstm":
        raise EncoderError("encode_bilstm needs a bilstm config")
    h0 = _check_h0(h0, config)
    g = Graph(params)
    L = h0.shape[0]
    out = bilstm_graph(g, g.const(h0), config, [0], [L])
    return EncodedSentence(evaluate(g)[out])


def encode(tokens, params, config):
    h0 = embed(tokens, params)
    if config.kind == "transformer":
        return encode_transformer(h0, params, config)
    return encode_bilstm(h0, params, config)


def encode_many(sequences, params, config):
    """Encode several sentences in one packed pass; returns one array per sentence."""
    if not sequences:
        return []
    packed = pack(sequences, config)
    g = Graph(params)
    out = encoder_graph(g, config, packed)
    h = evaluate(g)[out]
    return [h[s:e] for s, e in zip(packed.seg_starts, packed.seg_ends)]
