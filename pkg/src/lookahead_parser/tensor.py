"""A small reverse-mode autodiff kernel on numpy arrays.

Only the operations the hierarchy predictor needs are provided.  A
:class:`Tape` records each op with a closure that pushes the output
gradient back to the inputs; :meth:`Tape.backward` replays them in reverse.
A tape with ``record=False`` computes values only (inference mode).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class UsageError(RuntimeError):
    pass


class Node:
    __slots__ = ("value", "grad", "requires_grad", "name", "_backward", "_tape")

    def __init__(self, value: np.ndarray, requires_grad: bool = False, name: str | None = None):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward = None
        self._tape = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Node{tag}{self.value.shape}"


def parameter(value: np.ndarray, name: str | None = None) -> Node:
    return Node(np.asarray(value, dtype=np.float64), True, name)


def _acc(node: Node, g: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = g.copy() if node._tape is None else g
    else:
        node.grad = node.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _sigmoid(x):
    # numerically stable in both tails
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class Tape:
    def __init__(self, record: bool = True, check_finite: bool = True, dtype=np.float64):
        self.record = record
        self.check_finite = check_finite
        self.dtype = dtype
        self.nodes: list[Node] = []

    # -- plumbing
    def _out(self, value, parents, backward) -> Node:
        if self.check_finite and not np.isfinite(value).all():
            raise NonFiniteError(f"non-finite value produced by {backward.__qualname__.split('.')[1]}")
        node = Node(value, False)
        if self.record and any(p.requires_grad for p in parents):
            node.requires_grad = True
            node._backward = backward
            node._tape = self
            self.nodes.append(node)
        return node

    def _v(self, node: Node) -> np.ndarray:
        v = node.value
        return v if v.dtype == self.dtype else v.astype(self.dtype)

    def constant(self, value) -> Node:
        return Node(np.asarray(value, dtype=self.dtype))

    def zeros(self, *shape) -> Node:
        return Node(np.zeros(shape, dtype=self.dtype))

    # -- ops
    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = self._v(a), self._v(b)
        if av.shape[-1] != bv.shape[0] or bv.ndim > 2:
            raise ShapeError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
        out = av @ bv

        def backward(g):
            if a.requires_grad:
                _acc(a, g @ bv.T if bv.ndim == 2 else np.multiply.outer(g, bv))
            if b.requires_grad:
                if av.ndim == 1:
                    _acc(b, np.multiply.outer(av, g) if bv.ndim == 2 else av * g)
                else:
                    a2 = av.reshape(-1, av.shape[-1])
                    g2 = g.reshape(a2.shape[0], -1) if bv.ndim == 2 else g.reshape(-1)
                    _acc(b, a2.T @ g2)
        return self._out(out, (a, b), backward)

    def add(self, a: Node, b: Node) -> Node:
        av, bv = self._v(a), self._v(b)
        try:
            out = av + bv
        except ValueError:
            raise ShapeError(f"add: shapes {av.shape} and {bv.shape} do not broadcast") from None

        def backward(g):
            _acc(a, _unbroadcast(g, av.shape))
            _acc(b, _unbroadcast(g, bv.shape))
        return self._out(out, (a, b), backward)

    def mul(self, a: Node, b: Node) -> Node:
        """Element-wise (Hadamard) product with broadcasting."""
        av, bv = self._v(a), self._v(b)
        try:
            out = av * bv
        except ValueError:
            raise ShapeError(f"mul: shapes {av.shape} and {bv.shape} do not broadcast") from None

        def backward(g):
            if a.requires_grad:
                _acc(a, _unbroadcast(g * bv, av.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g * av, bv.shape))
        return self._out(out, (a, b), backward)

    def tanh(self, a: Node) -> Node:
        y = np.tanh(self._v(a))

        def backward(g):
            _acc(a, g * (1.0 - y * y))
        return self._out(y, (a,), backward)

    def sigmoid(self, a: Node) -> Node:
        y = _sigmoid(self._v(a))

        def backward(g):
            _acc(a, g * y * (1.0 - y))
        return self._out(y, (a,), backward)

    def one_minus(self, a: Node) -> Node:
        def backward(g):
            _acc(a, -g)
        return self._out(1.0 - self._v(a), (a,), backward)

    def concat(self, nodes: list[Node], axis: int = -1) -> Node:
        vals = [self._v(n) for n in nodes]
        try:
            out = np.concatenate(vals, axis=axis)
        except ValueError:
            raise ShapeError(f"concat: incompatible shapes {[v.shape for v in vals]}") from None
        bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

        def backward(g):
            for n, part in zip(nodes, np.split(g, bounds, axis=axis)):
                _acc(n, part)
        return self._out(out, nodes, backward)

    def stack(self, nodes: list[Node]) -> Node:
        vals = [self._v(n) for n in nodes]
        if len({v.shape for v in vals}) > 1:
            raise ShapeError(f"stack: differing shapes {[v.shape for v in vals]}")
        out = np.stack(vals)

        def backward(g):
            for k, n in enumerate(nodes):
                _acc(n, g[k])
        return self._out(out, nodes, backward)

    def lookup(self, table: Node, idx) -> Node:
        """Rows of ``table`` (embedding lookup); ``idx`` is an int or int array."""
        tv = self._v(table)
        out = tv[idx]

        def backward(g):
            if not table.requires_grad:
                return
            if table._tape is None:
                # parameter table: scatter straight into its gradient
                if table.grad is None:
                    table.grad = np.zeros_like(tv)
                np.add.at(table.grad, idx, g)
            else:
                full = np.zeros_like(tv)
                np.add.at(full, idx, g)
                _acc(table, full)
        return self._out(out, (table,), backward)

    def reshape(self, a: Node, shape) -> Node:
        av = self._v(a)
        try:
            out = av.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot reshape {av.shape} to {shape}") from None

        def backward(g):
            _acc(a, g.reshape(av.shape))
        return self._out(out, (a,), backward)

    def index(self, a: Node, key) -> Node:
        """Basic numpy indexing/slicing (no repeated positions)."""
        av = self._v(a)
        out = av[key]

        def backward(g):
            full = np.zeros_like(av)
            full[key] = g
            _acc(a, full)
        return self._out(out, (a,), backward)

    def sum(self, a: Node, axis=None) -> Node:
        av = self._v(a)
        out = np.asarray(av.sum(axis=axis))

        def backward(g):
            _acc(a, np.broadcast_to(np.expand_dims(g, axis) if axis is not None else g,
                                    av.shape).copy())
        return self._out(out, (a,), backward)

    def lstm_cell(self, z: Node, hc: Node | None, W2: Node, W5: Node, W7: Node,
                  w3: Node, w8: Node, row: int | None = None) -> Node:
        """Coupled-gate peephole LSTM step as a single op.

        ``z`` holds the input pre-activations ``[x W1 + b1 | x W4 + b2 | x W6 + b3]``
        along its last axis (``row`` selects one row of a matrix of them).
        ``hc`` is the previous output of this op (None for the zero state).
        Returns a node whose value is ``stack([h, c])``.
        """
        zv = self._v(z) if row is None else self._v(z)[row]
        H = W2.value.shape[1]
        if zv.shape[-1] != 3 * H:
            raise ShapeError(f"lstm_cell: pre-activations {zv.shape} for hidden size {H}")
        W2v, W5v, W7v, w3v, w8v = (self._v(n) for n in (W2, W5, W7, w3, w8))
        if hc is None:
            h0 = c0 = np.zeros(zv.shape[:-1] + (H,), dtype=zv.dtype)
            zi, zc, zo = zv[..., :H], zv[..., H:2 * H], zv[..., 2 * H:]
        else:
            h0, c0 = self._v(hc)
            zi = zv[..., :H] + h0 @ W2v + w3v * c0
            zc = zv[..., H:2 * H] + h0 @ W5v
            zo = zv[..., 2 * H:] + h0 @ W7v
        i = _sigmoid(zi)
        g = np.tanh(zc)
        c = (1.0 - i) * c0 + i * g
        o = _sigmoid(zo + w8v * c)
        tc = np.tanh(c)
        h = o * tc

        def backward(G):
            gh, gc = G[0], G[1]
            do = gh * tc * o * (1.0 - o)
            dc = gc + gh * o * (1.0 - tc * tc) + do * w8v
            di = dc * (g - c0) * i * (1.0 - i)
            dg = dc * i * (1.0 - g * g)
            dz = np.concatenate([di, dg, do], axis=-1)
            if z.requires_grad:
                if row is None:
                    _acc(z, dz)
                else:
                    full = np.zeros_like(self._v(z))
                    full[row] = dz
                    _acc(z, full)
            _acc(w8, _unbroadcast(do * c, w8v.shape))
            if hc is None:
                return
            _acc(w3, _unbroadcast(di * c0, w3v.shape))
            h2, d_i, d_g, d_o = (x.reshape(-1, H) for x in (h0, di, dg, do))
            _acc(W2, h2.T @ d_i)
            _acc(W5, h2.T @ d_g)
            _acc(W7, h2.T @ d_o)
            if hc.requires_grad:
                dh0 = di @ W2v.T + dg @ W5v.T + do @ W7v.T
                dc0 = dc * (1.0 - i) + di * w3v
                _acc(hc, np.stack([dh0, dc0]))
        parents = (z, W2, W5, W7, w3, w8) + ((hc,) if hc is not None else ())
        return self._out(np.stack([h, c]), parents, backward)

    def softmax(self, a: Node, mask: np.ndarray | None = None) -> Node:
        """Softmax over the last axis; ``mask`` (bool) excludes entries."""
        av = self._v(a)
        if mask is not None:
            av = np.where(mask, av, -np.inf)
        y = _softmax(av)

        def backward(g):
            _acc(a, y * (g - (g * y).sum(axis=-1, keepdims=True)))
        return self._out(y, (a,), backward)

    def softmax_xent(self, logits: Node, targets, mask=None):
        """Row-wise softmax and summed cross-entropy against integer targets.

        Returns ``(probabilities, loss node)``; rows with ``mask`` False are
        ignored.
        """
        lv = self._v(logits)
        p = _softmax(lv)
        targets = np.asarray(targets)
        if lv.ndim == 1:
            p2, t2 = p[None, :], targets.reshape(1)
        else:
            p2, t2 = p, targets
        if t2.shape[0] != p2.shape[0]:
            raise ShapeError(f"softmax_xent: {t2.shape[0]} targets for logits {lv.shape}")
        rows = np.arange(p2.shape[0])
        m = np.ones(p2.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        picked = p2[rows, t2]
        loss = -np.log(picked[m]).sum()

        def backward(g):
            d = p2.copy()
            d[rows, t2] -= 1.0
            d[~m] = 0.0
            _acc(logits, (g * d).reshape(lv.shape))
        return p, self._out(np.asarray(loss), (logits,), backward)

    # -- reverse pass
    def backward(self, loss: Node) -> None:
        if not self.record:
            raise UsageError("backward on a tape created with record=False")
        if loss._tape is not self or not self.nodes:
            raise UsageError("backward called before any recorded forward computation")
        if loss.value.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is not None:
                node._backward(node.grad)
                if node._tape is self:
                    node.grad = None if node is not loss else node.grad
        self.nodes = []


# ---------------------------------------------------------------- optimizer

def sgd_momentum_step(params, grads, velocity, lr: float, momentum: float, l2: float) -> None:
    """Classical momentum: ``v = mu*v - lr*(g + l2*theta)``; ``theta += v`` (in place)."""
    for theta, g, v in zip(params, grads, velocity):
        if theta.shape != g.shape or theta.shape != v.shape:
            raise ShapeError(f"optimizer: {theta.shape} vs grad {g.shape} vs velocity {v.shape}")
        v *= momentum
        v -= lr * (g + l2 * theta)
        theta += v


class SGDMomentum:
    def __init__(self, params: list[Node], lr: float = 0.01, momentum: float = 0.9,
                 l2: float = 1e-6, clip: float | None = None):
        self.params = params
        self.lr, self.momentum, self.l2, self.clip = lr, momentum, l2, clip
        self.velocity = [np.zeros_like(p.value) for p in params]

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        if self.clip is not None:
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > self.clip:
                grads = [g * (self.clip / norm) for g in grads]
        sgd_momentum_step([p.value for p in self.params], grads, self.velocity,
                          self.lr, self.momentum, self.l2)
        for p in self.params:
            p.grad = None
