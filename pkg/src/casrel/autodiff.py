"""A small reverse-mode differentiation engine over numpy arrays.

A :class:`Graph` is a flat, append-only list of nodes. Nodes are created by the
builder methods (``g.affine(x, w, b)``, ``g.sigmoid(z)``, ...), which infer and
check output shapes eagerly, so an ill-formed graph fails at build time.
:func:`evaluate` runs the forward pass in node order and :func:`gradient`
back-propagates a scalar node to every named parameter.

Everything is float64. Reductions use numpy's fixed pairwise order, so repeated
evaluation with the same inputs is bitwise reproducible.
"""

from collections import namedtuple

import numpy as np

from . import kernels

__all__ = [
    "BCE_CLAMP",
    "GraphError",
    "ShapeError",
    "UnboundPlaceholderError",
    "Graph",
    "evaluate",
    "gradient",
    "value_and_gradient",
]

BCE_CLAMP = 1e-12


class GraphError(Exception):
    """Base class for graph construction and evaluation failures."""


class ShapeError(GraphError, ValueError):
    def __init__(self, node, message):
        super().__init__(f"node {node}: {message}")
        self.node = node


class UnboundPlaceholderError(GraphError, KeyError):
    def __init__(self, node, name):
        super().__init__(f"node {node}: placeholder {name!r} is not bound")
        self.node = node
        self.name = name

    def __str__(self):
        return self.args[0]


Node = namedtuple("Node", ["op", "inputs", "shape", "attrs"])


def _broadcast(node_id, a, b):
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(node_id, f"cannot broadcast {a} with {b}") from None


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


_GELU_C = np.sqrt(2.0 / np.pi)


def _sigmoid(x):
    # tanh form is overflow-free for any finite input
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Graph:
    """Append-only expression graph.

    ``params`` maps parameter names to arrays. The graph keeps a reference, not
    a copy; callers are expected to treat the arrays as read-only while the
    graph is alive.
    """

    def __init__(self, params=None):
        self.nodes = []
        self.params = {} if params is None else params
        self.param_nodes = {}
        self.placeholders = {}

    def __len__(self):
        return len(self.nodes)

    def _add(self, op, inputs, shape, **attrs):
        self.nodes.append(Node(op, tuple(inputs), tuple(shape), attrs))
        return len(self.nodes) - 1

    def shape(self, node):
        return self.nodes[node].shape

    def _check_ids(self, *ids):
        for i in ids:
            if not (isinstance(i, (int, np.integer)) and 0 <= i < len(self.nodes)):
                raise GraphError(f"unknown node id {i!r}")

    # -- leaves --------------------------------------------------------------

    def input(self, name, shape):
        if name in self.placeholders:
            raise GraphError(f"duplicate placeholder {name!r}")
        nid = self._add("input", (), shape, name=name)
        self.placeholders[name] = nid
        return nid

    def param(self, name, value=None):
        """Reference parameter ``name``, registering ``value`` if given."""
        if value is not None:
            if name in self.params and self.params[name] is not value:
                raise GraphError(f"duplicate parameter {name!r}")
            self.params[name] = np.asarray(value, dtype=np.float64)
        if name not in self.params:
            raise GraphError(f"unknown parameter {name!r}")
        if name in self.param_nodes:
            return self.param_nodes[name]
        nid = self._add("param", (), self.params[name].shape, name=name)
        self.param_nodes[name] = nid
        return nid

    def const(self, value):
        value = np.asarray(value, dtype=np.float64)
        return self._add("const", (), value.shape, value=value)

    # -- elementwise ---------------------------------------------------------

    def _binary(self, op, a, b):
        self._check_ids(a, b)
        shape = _broadcast(len(self.nodes), self.shape(a), self.shape(b))
        return self._add(op, (a, b), shape)

    def add(self, a, b):
        return self._binary("add", a, b)

    def sub(self, a, b):
        return self._binary("sub", a, b)

    def mul(self, a, b):
        return self._binary("mul", a, b)

    def scale(self, a, k):
        self._check_ids(a)
        return self._add("scale", (a,), self.shape(a), k=float(k))

    def _unary(self, op, a):
        self._check_ids(a)
        return self._add(op, (a,), self.shape(a))

    def sigmoid(self, a):
        return self._unary("sigmoid", a)

    def tanh(self, a):
        return self._unary("tanh", a)

    def relu(self, a):
        return self._unary("relu", a)

    def gelu(self, a):
        """tanh approximation of GELU."""
        return self._unary("gelu", a)

    def exp(self, a):
        return self._unary("exp", a)

    def log(self, a):
        return self._unary("log", a)

    # -- linear algebra --------------------------------------------------------

    def matmul(self, a, b):
        self._check_ids(a, b)
        sa, sb = self.shape(a), self.shape(b)
        if len(sa) != 2 or len(sb) != 2 or sa[1] != sb[0]:
            raise ShapeError(len(self.nodes), f"matmul of {sa} and {sb}")
        return self._add("matmul", (a, b), (sa[0], sb[1]))

    def transpose(self, a):
        self._check_ids(a)
        s = self.shape(a)
        if len(s) != 2:
            raise ShapeError(len(self.nodes), f"transpose needs a matrix, got {s}")
        return self._add("transpose", (a,), (s[1], s[0]))

    def affine(self, x, w, b):
        """``x @ w + b`` with ``b`` broadcast over rows."""
        self._check_ids(x, w, b)
        sx, sw, sb = self.shape(x), self.shape(w), self.shape(b)
        if len(sx) != 2 or len(sw) != 2 or sx[1] != sw[0] or sb != (sw[1],):
            raise ShapeError(len(self.nodes), f"affine of x{sx}, w{sw}, b{sb}")
        return self._add("affine", (x, w, b), (sx[0], sw[1]))

    # -- reductions and structure -------------------------------------------

    def sum(self, a):
        self._check_ids(a)
        return self._add("sum", (a,), ())

    def mean(self, a):
        self._check_ids(a)
        return self._add("mean", (a,), ())

    def softmax(self, a):
        """Softmax along the last axis."""
        self._check_ids(a)
        if len(self.shape(a)) < 1:
            raise ShapeError(len(self.nodes), "softmax of a scalar")
        return self._add("softmax", (a,), self.shape(a))

    def rows(self, a, start, stop):
        self._check_ids(a)
        s = self.shape(a)
        if not (len(s) == 2 and 0 <= start < stop <= s[0]):
            raise ShapeError(len(self.nodes), f"rows[{start}:{stop}] of {s}")
        return self._add("rows", (a,), (stop - start, s[1]), start=start, stop=stop)

    def cols(self, a, start, stop):
        self._check_ids(a)
        s = self.shape(a)
        if not (len(s) == 2 and 0 <= start < stop <= s[1]):
            raise ShapeError(len(self.nodes), f"cols[{start}:{stop}] of {s}")
        return self._add("cols", (a,), (s[0], stop - start), start=start, stop=stop)

    def row_mean(self, a, start, end):
        """Mean of rows ``start..end`` inclusive, as a 1 x d matrix."""
        self._check_ids(a)
        s = self.shape(a)
        if not (len(s) == 2 and 0 <= start <= end < s[0]):
            raise ShapeError(len(self.nodes), f"row_mean[{start}..{end}] of {s}")
        return self._add("row_mean", (a,), (1, s[1]), start=start, end=end)

    def concat(self, parts, axis=1):
        self._check_ids(*parts)
        shapes = [self.shape(p) for p in parts]
        if not parts or any(len(s) != 2 for s in shapes):
            raise ShapeError(len(self.nodes), f"concat of {shapes}")
        other = 1 - axis
        if len({s[other] for s in shapes}) != 1:
            raise ShapeError(len(self.nodes), f"concat axis {axis} of {shapes}")
        out = list(shapes[0])
        out[axis] = sum(s[axis] for s in shapes)
        sizes = [s[axis] for s in shapes]
        return self._add("concat", parts, out, axis=axis, sizes=sizes)

    def take(self, table, ids):
        """Gather rows of a matrix: ``table[ids]``."""
        self._check_ids(table)
        s = self.shape(table)
        ids = np.asarray(ids, dtype=np.int64)
        if len(s) != 2 or ids.ndim != 1:
            raise ShapeError(len(self.nodes), f"take of {ids.shape} rows from {s}")
        if ids.size and (ids.min() < 0 or ids.max() >= s[0]):
            raise ShapeError(len(self.nodes), f"row index out of range for table {s}")
        return self._add("take", (table,), (ids.size, s[1]), ids=ids)

    # -- fused ops -------------------------------------------------------------

    def layer_norm(self, x, gain, bias, eps=1e-5):
        self._check_ids(x, gain, bias)
        sx = self.shape(x)
        if len(sx) != 2 or self.shape(gain) != (sx[1],) or self.shape(bias) != (sx[1],):
            raise ShapeError(len(self.nodes), f"layer_norm of {sx}")
        return self._add("layer_norm", (x, gain, bias), sx, eps=float(eps))

    def bce(self, p, target):
        """Elementwise ``-y ln p - (1-y) ln(1-p)``; ``target`` is not differentiated."""
        self._check_ids(p, target)
        if self.shape(p) != self.shape(target):
            raise ShapeError(len(self.nodes), f"bce of {self.shape(p)} vs {self.shape(target)}")
        return self._add("bce", (p, target), self.shape(p))

    def lstm(self, pre, w_hh, seg_starts, seg_ends, reverse=False):
        """Single-direction LSTM over packed segments; ``pre`` is T x 4h."""
        self._check_ids(pre, w_hh)
        sp, sw = self.shape(pre), self.shape(w_hh)
        if len(sp) != 2 or sp[1] % 4 or sw != (sp[1] // 4, sp[1]):
            raise ShapeError(len(self.nodes), f"lstm of pre{sp}, w_hh{sw}")
        seg_starts = np.asarray(seg_starts, dtype=np.int64)
        seg_ends = np.asarray(seg_ends, dtype=np.int64)
        return self._add(
            "lstm", (pre, w_hh), (sp[0], sp[1] // 4),
            seg_starts=seg_starts, seg_ends=seg_ends, reverse=bool(reverse),
        )


# ---------------------------------------------------------------- forward


def _fwd_input(node, args, nid, bindings):
    name = node.attrs["name"]
    if name not in bindings:
        raise UnboundPlaceholderError(nid, name)
    value = np.asarray(bindings[name], dtype=np.float64)
    if value.shape != node.shape:
        raise ShapeError(nid, f"placeholder {name!r} bound to shape {value.shape}, expected {node.shape}")
    return value, None


def _forward_node(graph, nid, node, vals, bindings):
    op = node.op
    a = [vals[i] for i in node.inputs]
    if op == "input":
        return _fwd_input(node, a, nid, bindings)
    if op == "param":
        value = graph.params[node.attrs["name"]]
        if value.shape != node.shape:
            raise ShapeError(nid, f"parameter {node.attrs['name']!r} has shape {value.shape}, graph expects {node.shape}")
        return value, None
    if op == "const":
        return node.attrs["value"], None
    if op == "add":
        return a[0] + a[1], None
    if op == "sub":
        return a[0] - a[1], None
    if op == "mul":
        return a[0] * a[1], None
    if op == "scale":
        return a[0] * node.attrs["k"], None
    if op == "sigmoid":
        return _sigmoid(a[0]), None
    if op == "tanh":
        return np.tanh(a[0]), None
    if op == "relu":
        return np.maximum(a[0], 0.0), None
    if op == "gelu":
        x = a[0]
        return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3))), None
    if op == "exp":
        return np.exp(a[0]), None
    if op == "log":
        return np.log(a[0]), None
    if op == "matmul":
        return a[0] @ a[1], None
    if op == "transpose":
        return a[0].T, None
    if op == "affine":
        return a[0] @ a[1] + a[2], None
    if op == "sum":
        return np.sum(a[0]), None
    if op == "mean":
        return np.mean(a[0]), None
    if op == "softmax":
        z = a[0] - a[0].max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True), None
    if op == "rows":
        return a[0][node.attrs["start"]:node.attrs["stop"]], None
    if op == "cols":
        return a[0][:, node.attrs["start"]:node.attrs["stop"]], None
    if op == "row_mean":
        s, e = node.attrs["start"], node.attrs["end"]
        return a[0][s:e + 1].mean(axis=0, keepdims=True), None
    if op == "concat":
        return np.concatenate(a, axis=node.attrs["axis"]), None
    if op == "take":
        return a[0][node.attrs["ids"]], None
    if op == "layer_norm":
        y, xhat, rstd = kernels.layer_norm_forward(
            np.ascontiguousarray(a[0]), a[1], a[2], node.attrs["eps"]
        )
        return y, (xhat, rstd)
    if op == "bce":
        p = np.clip(a[0], BCE_CLAMP, 1.0 - BCE_CLAMP)
        y = a[1]
        return -(y * np.log(p) + (1.0 - y) * np.log1p(-p)), None
    if op == "lstm":
        H, C, A = kernels.lstm_forward(
            np.ascontiguousarray(a[0]), np.ascontiguousarray(a[1]),
            node.attrs["seg_starts"], node.attrs["seg_ends"], node.attrs["reverse"],
        )
        return H, (C, A)
    raise GraphError(f"node {nid}: unknown op {op!r}")


def _forward(graph, bindings):
    vals = [None] * len(graph.nodes)
    aux = [None] * len(graph.nodes)
    for nid, node in enumerate(graph.nodes):
        vals[nid], aux[nid] = _forward_node(graph, nid, node, vals, bindings)
    return vals, aux


def evaluate(graph, bindings=None):
    """Forward values for every node, indexed by node id."""
    vals, _ = _forward(graph, bindings or {})
    return vals


# --------------------------------------------------------------- backward


def _backward_node(node, vals, aux, nid, g):
    """Return one gradient (or None) per input of ``node``."""
    op = node.op
    a = [vals[i] for i in node.inputs]
    out = vals[nid]
    if op == "add":
        return _unbroadcast(g, a[0].shape), _unbroadcast(g, a[1].shape)
    if op == "sub":
        return _unbroadcast(g, a[0].shape), _unbroadcast(-g, a[1].shape)
    if op == "mul":
        return _unbroadcast(g * a[1], a[0].shape), _unbroadcast(g * a[0], a[1].shape)
    if op == "scale":
        return (g * node.attrs["k"],)
    if op == "sigmoid":
        return (g * out * (1.0 - out),)
    if op == "tanh":
        return (g * (1.0 - out * out),)
    if op == "relu":
        return (g * (a[0] > 0.0),)
    if op == "gelu":
        x = a[0]
        t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)),)
    if op == "exp":
        return (g * out,)
    if op == "log":
        return (g / a[0],)
    if op == "matmul":
        return g @ a[1].T, a[0].T @ g
    if op == "transpose":
        return (g.T,)
    if op == "affine":
        return g @ a[1].T, a[0].T @ g, g.sum(axis=0)
    if op == "sum":
        return (np.full(a[0].shape, g),)
    if op == "mean":
        return (np.full(a[0].shape, g / max(a[0].size, 1)),)
    if op == "softmax":
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)
    if op == "rows":
        d = np.zeros(a[0].shape)
        d[node.attrs["start"]:node.attrs["stop"]] = g
        return (d,)
    if op == "cols":
        d = np.zeros(a[0].shape)
        d[:, node.attrs["start"]:node.attrs["stop"]] = g
        return (d,)
    if op == "row_mean":
        s, e = node.attrs["start"], node.attrs["end"]
        d = np.zeros(a[0].shape)
        d[s:e + 1] = g / (e - s + 1)
        return (d,)
    if op == "concat":
        bounds = np.cumsum(node.attrs["sizes"])[:-1]
        return tuple(np.split(g, bounds, axis=node.attrs["axis"]))
    if op == "take":
        d = np.zeros(a[0].shape)
        np.add.at(d, node.attrs["ids"], g)
        return (d,)
    if op == "layer_norm":
        xhat, rstd = aux[nid]
        return kernels.layer_norm_backward(np.ascontiguousarray(g), xhat, rstd, a[1])
    if op == "bce":
        p, y = a
        inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
        pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
        return g * inside * (pc - y) / (pc * (1.0 - pc)), None
    if op == "lstm":
        C, A = aux[nid]
        return kernels.lstm_backward(
            np.ascontiguousarray(g), out, C, A, np.ascontiguousarray(a[1]),
            node.attrs["seg_starts"], node.attrs["seg_ends"], node.attrs["reverse"],
        )
    raise GraphError(f"node {nid}: no gradient rule for {op!r}")


def value_and_gradient(graph, bindings, loss):
    """Return ``(loss value, {param name: d loss / d param})``."""
    if graph.nodes[loss].shape != ():
        raise ShapeError(loss, f"loss must be a scalar, got shape {graph.nodes[loss].shape}")
    vals, aux = _forward(graph, bindings or {})
    grads = [None] * len(graph.nodes)
    grads[loss] = np.ones(())
    for nid in range(loss, -1, -1):
        g = grads[nid]
        node = graph.nodes[nid]
        if g is None or not node.inputs:
            continue
        for src, dg in zip(node.inputs, _backward_node(node, vals, aux, nid, g)):
            if dg is None:
                continue
            grads[src] = dg if grads[src] is None else grads[src] + dg
    out = {}
    for name, value in graph.params.items():
        nid = graph.param_nodes.get(name)
        g = grads[nid] if nid is not None else None
        out[name] = np.zeros_like(value) if g is None else np.asarray(g, dtype=np.float64).reshape(value.shape)
    return float(vals[loss]), out


def gradient(graph, bindings, loss):
    """Gradient of scalar node ``loss`` w.r.t. every parameter of ``graph``.

    Parameters that ``loss`` does not depend on get zero arrays.
    """
    return value_and_gradient(graph, bindings, loss)[1]
