"""Small reverse-mode automatic differentiation over numpy arrays.

Graphs are built eagerly: every operation records a node holding its parent
variables and a vector-Jacobian closure.  Nodes may expose several output
variables (used by the fused network kernels, which return values together
with their input derivatives).  ``backward`` walks the graph once in reverse
topological order and accumulates cotangents into the requested leaves.

Only float64 is supported; constants (plain numpy arrays or python scalars)
may be mixed freely with variables and never receive gradients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var",
    "Node",
    "constant",
    "leaf",
    "backward",
    "vsum",
    "vmean",
    "vabs",
    "vsqrt",
    "vtanh",
    "matmul",
    "stack_cols",
]


class Node:
    """One recorded operation: parents, outputs and a vjp closure.

    ``vjp`` receives one cotangent per output (zeros were never requested)
    and must return one cotangent per parent, aligned with ``parents``.
    """

    __slots__ = ("parents", "vjp", "n_out", "outputs")

    def __init__(self, parents, vjp, n_out):
        self.parents = parents
        self.vjp = vjp
        self.n_out = n_out
        self.outputs = []


class Var:
    """A float64 array (or scalar) tracked by the tape."""

    __slots__ = ("value", "node", "idx")

    # let reflected operators win over ndarray's elementwise dispatch
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, node=None, idx=0):
        self.value = value
        self.node = node
        self.idx = idx

    @property
    def shape(self):
        return np.shape(self.value)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return _binary(self, other, np.add, lambda g, a, b: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda g, a, b: (g, -g))

    def __rsub__(self, other):
        return _binary_const_left(other, self, np.subtract, lambda g: -g)

    def __mul__(self, other):
        return _binary(self, other, np.multiply, lambda g, a, b: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _binary(
            self, other, np.divide,
            lambda g, a, b: (g / b, -g * a / (b * b)),
        )

    def __rtruediv__(self, other):
        return _binary_const_left(
            other, self, np.divide, None,
            vjp_with_operands=lambda g, a, b: -g * a / (b * b),
        )

    def __neg__(self):
        return _unary(self, np.negative, lambda g, x, y: -g)

    def __pow__(self, p):
        if not np.isscalar(p):
            raise TypeError("only scalar exponents are supported")
        return _unary(
            self,
            lambda x: np.power(x, p),
            lambda g, x, y: g * p * np.power(x, p - 1),
        )

    def __getitem__(self, key):
        x = self.value

        def fwd():
            return x[key]

        def vjp(g):
            out = np.zeros_like(x)
            out[key] = g
            return (out,)

        return _make_node([self], fwd(), vjp)

    def __repr__(self):
        return f"Var({self.value!r})"


def constant(value):
    """Wrap data that must not receive gradients."""
    return np.asarray(value, dtype=np.float64)


def leaf(value):
    """A trainable leaf variable; ``value`` is kept by reference."""
    return Var(np.asarray(value, dtype=np.float64))


def _make_node(parent_vars, value, vjp, extra_values=None):
    node = Node(parent_vars, vjp, 1 + (len(extra_values) if extra_values else 0))
    out = Var(value, node, 0)
    node.outputs.append(out)
    if extra_values:
        for i, v in enumerate(extra_values):
            o = Var(v, node, i + 1)
            node.outputs.append(o)
        return node.outputs
    return out


def make_multi_node(parent_vars, values, vjp):
    """Record one node with several outputs; returns the output Vars."""
    node = Node(parent_vars, vjp, len(values))
    for i, v in enumerate(values):
        node.outputs.append(Var(v, node, i))
    return node.outputs


def _unary(x, fwd, vjp_xy):
    xv = x.value
    y = fwd(xv)
    return _make_node([x], y, lambda g: (vjp_xy(g[0] if isinstance(g, list) else g, xv, y),))


def _coerce(other):
    if isinstance(other, Var):
        return other, True
    return np.asarray(other, dtype=np.float64), False


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if np.shape(grad) == tuple(shape):
        return grad
    grad = np.asarray(grad)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    if grad.shape != tuple(shape):
        grad = np.reshape(grad, shape)
    return grad


def _binary(a, b, fwd, vjp_ab):
    bv, b_is_var = _coerce(b)
    av = a.value
    bval = bv.value if b_is_var else bv
    y = fwd(av, bval)
    a_shape = np.shape(av)
    b_shape = np.shape(bval)

    if b_is_var:
        def vjp(g):
            ga, gb = vjp_ab(g, av, bval)
            return (_unbroadcast(ga, a_shape), _unbroadcast(gb, b_shape))

        return _make_node([a, bv], y, vjp)

    def vjp(g):
        ga, _ = vjp_ab(g, av, bval)
        return (_unbroadcast(ga, a_shape),)

    return _make_node([a], y, vjp)


def _binary_const_left(a_const, b, fwd, vjp_simple, vjp_with_operands=None):
    av = np.asarray(a_const, dtype=np.float64)
    bval = b.value
    y = fwd(av, bval)
    b_shape = np.shape(bval)

    def vjp(g):
        if vjp_with_operands is not None:
            gb = vjp_with_operands(g, av, bval)
        else:
            gb = vjp_simple(g)
        return (_unbroadcast(gb, b_shape),)

    return _make_node([b], y, vjp)


def vsum(x, axis=None):
    xv = x.value
    y = np.sum(xv, axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, np.shape(xv)).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), np.shape(xv)).copy(),)

    return _make_node([x], y, vjp)


def vmean(x, axis=None):
    n = np.size(x.value) if axis is None else np.shape(x.value)[axis]
    return vsum(x, axis=axis) * (1.0 / n)


def vabs(x):
    xv = x.value
    return _make_node([x], np.abs(xv), lambda g: (g * np.sign(xv),))


def vsqrt(x):
    xv = x.value
    y = np.sqrt(xv)

    def vjp(g):
        # guard the non-differentiable point so an exactly-zero argument
        # yields a zero (not NaN) contribution
        denom = np.where(y > 0.0, 2.0 * y, np.inf)
        return (g / denom,)

    return _make_node([x], y, vjp)


def vtanh(x):
    y = np.tanh(x.value)
    return _make_node([x], y, lambda g: (g * (1.0 - y * y),))


def matmul(a, b):
    """Matrix product; either operand may be a constant array."""
    a_var = isinstance(a, Var)
    b_var = isinstance(b, Var)
    av = a.value if a_var else np.asarray(a, dtype=np.float64)
    bv = b.value if b_var else np.asarray(b, dtype=np.float64)
    y = av @ bv

    parents = []
    if a_var:
        parents.append(a)
    if b_var:
        parents.append(b)

    def vjp(g):
        out = []
        if a_var:
            out.append(g @ bv.T)
        if b_var:
            out.append(av.T @ g)
        return tuple(out)

    return _make_node(parents, y, vjp)


def stack_cols(columns):
    """Stack 1-d vars/arrays of equal length into an (n, k) matrix."""
    vals = [c.value if isinstance(c, Var) else np.asarray(c, dtype=np.float64)
            for c in columns]
    y = np.stack(vals, axis=1)
    var_cols = [(i, c) for i, c in enumerate(columns) if isinstance(c, Var)]
    parents = [c for _, c in var_cols]
    idxs = [i for i, _ in var_cols]

    def vjp(g):
        return tuple(g[:, i] for i in idxs)

    return _make_node(parents, y, vjp)


def backward(root, wrt):
    """Gradient of scalar ``root`` with respect to the leaves in ``wrt``.

    Returns a list of arrays shaped like the corresponding leaf values;
    leaves the root does not depend on get zeros.
    """
    if np.ndim(root.value) != 0:
        raise ValueError("backward expects a scalar root")

    # reverse topological order over nodes
    order = []
    seen = set()
    stack = [root.node] if root.node is not None else []
    while stack:
        node = stack[-1]
        if id(node) in seen:
            stack.pop()
            continue
        ready = True
        for p in node.parents:
            if p.node is not None and id(p.node) not in seen:
                stack.append(p.node)
                ready = False
        if ready:
            seen.add(id(node))
            order.append(node)
            stack.pop()

    grads = {id(root): np.asarray(1.0)}
    for node in reversed(order):
        outs = [grads.get(id(o)) for o in node.outputs]
        if all(o is None for o in outs):
            continue
        outs = [
            o if o is not None else np.zeros(np.shape(v.value))
            for o, v in zip(outs, node.outputs)
        ]
        parent_grads = node.vjp(outs if node.n_out > 1 else outs[0])
        for p, g in zip(node.parents, parent_grads):
            if g is None:
                continue
            acc = grads.get(id(p))
            grads[id(p)] = g if acc is None else acc + g

    result = []
    for w in wrt:
        g = grads.get(id(w))
        if g is None:
            g = np.zeros(np.shape(w.value))
        result.append(np.asarray(g, dtype=np.float64))
    return result
