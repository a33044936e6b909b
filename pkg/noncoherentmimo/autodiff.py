#!/usr/bin/env python3
"""Reverse-mode automatic differentiation over real numpy arrays.

Every primitive evaluates its value eagerly and records on the tape a
vector-Jacobian product (vjp) that maps the gradient of its output onto
gradients of its parents. Tape.backward walks the record in reverse.

Complex quantities are carried as (re, im) pairs of real nodes, so the
gradients of complex parameters are plain real partials of each plane.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

ROLES = ('parameter', 'input', 'intermediate')

# Batch-normalisation constants.
BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.99


class Node:
    # Make numpy defer binary operators like ndarray * Node to Node.
    __array_priority__ = 1000

    def __init__(self, tape, value, role='intermediate', parents=(), vjp=None, name=None):
        assert role in ROLES
        self.tape = tape
        self.value = np.asarray(value, dtype=np.float64)
        self.role = role
        self.parents = tuple(parents)
        self.vjp = vjp
        self.name = name
        self.grad = None

        if role == 'parameter': self.requires_grad = True
        else: self.requires_grad = any(p.requires_grad for p in self.parents)

        self.id = tape.record(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        label = ' %s' % self.name if self.name else ''
        return '<Node %d%s %s shape=%r>' % (self.id, label, self.role, self.shape)

    def _lift(self, other):
        if isinstance(other, Node): return other
        return self.tape.input(other)

    def __add__(self, other): return add(self, self._lift(other))
    def __radd__(self, other): return add(self._lift(other), self)
    def __sub__(self, other): return sub(self, self._lift(other))
    def __rsub__(self, other): return sub(self._lift(other), self)
    def __mul__(self, other):
        if np.isscalar(other): return scale(self, other)
        return mul(self, self._lift(other))
    def __rmul__(self, other):
        if np.isscalar(other): return scale(self, other)
        return mul(self._lift(other), self)
    def __truediv__(self, other):
        if np.isscalar(other): return scale(self, 1./other)
        return div(self, self._lift(other))
    def __rtruediv__(self, other): return div(self._lift(other), self)
    def __neg__(self): return scale(self, -1.)
    def __matmul__(self, other): return matmul(self, self._lift(other))
    def __rmatmul__(self, other): return matmul(self._lift(other), self)

    def sum(self, axis=None, keepdims=False): return sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, *shape)
    def exp(self): return exp(self)
    def log(self): return log(self)
    def sqrt(self): return sqrt(self)

    @property
    def mT(self):
        """Transpose of the last two axes."""
        return swap_last(self)


class Tape:
    """Ordered record of primitive evaluations; inputs always precede their consumers."""

    def __init__(self):
        self.nodes = []
        self.parameters = {}

    def record(self, node):
        self.nodes.append(node)
        return len(self.nodes) - 1

    def parameter(self, value, name):
        if name in self.parameters:
            raise ValueError('duplicate parameter name %r on tape' % name)
        node = Node(self, np.array(value, dtype=np.float64), role='parameter', name=name)
        self.parameters[name] = node
        return node

    def input(self, value, name=None):
        return Node(self, value, role='input', name=name)

    def backward(self, loss):
        """Reverse accumulation of d(loss)/d(parameter) for every parameter node.

        Returns:
            dict mapping parameter names to gradient arrays (zeros for parameters the loss does not reach).
        Raises:
            ValueError: if loss is not scalar-shaped or lives on another tape.
        """
        if loss.tape is not self:
            raise ValueError('loss node belongs to a different tape')
        if loss.shape != ():
            raise ValueError('loss must be scalar, got shape %r' % (loss.shape,))

        for node in self.nodes: node.grad = None
        loss.grad = np.ones(())

        for node in reversed(self.nodes[:loss.id+1]):
            if node.grad is None or node.vjp is None or not node.requires_grad: continue
            grads = node.vjp(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad: continue
                assert g.shape == parent.shape, (node, parent, g.shape)
                if parent.grad is None: parent.grad = g
                else: parent.grad = parent.grad + g

        return {name: (node.grad if node.grad is not None else np.zeros(node.shape))
                for name, node in self.parameters.items()}


def _tape_of(*nodes):
    tapes = {id(n.tape) for n in nodes}
    if len(tapes) != 1:
        raise ValueError('nodes from different tapes cannot be combined')
    return nodes[0].tape


def unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError('shapes %r and %r do not broadcast' % (a.shape, b.shape)) from None


# Elementwise arithmetic.

def add(a, b):
    _check_broadcast(a, b)
    return Node(_tape_of(a, b), a.value + b.value, parents=(a, b),
                vjp=lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))

def sub(a, b):
    _check_broadcast(a, b)
    return Node(_tape_of(a, b), a.value - b.value, parents=(a, b),
                vjp=lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))

def mul(a, b):
    _check_broadcast(a, b)
    return Node(_tape_of(a, b), a.value * b.value, parents=(a, b),
                vjp=lambda g: (unbroadcast(g*b.value, a.shape), unbroadcast(g*a.value, b.shape)))

def div(a, b):
    _check_broadcast(a, b)
    return Node(_tape_of(a, b), a.value / b.value, parents=(a, b),
                vjp=lambda g: (unbroadcast(g/b.value, a.shape),
                               unbroadcast(-g*a.value/b.value**2, b.shape)))

def scale(a, c):
    c = float(c)
    return Node(a.tape, c*a.value, parents=(a,), vjp=lambda g: (c*g,))

def exp(a):
    value = np.exp(a.value)
    return Node(a.tape, value, parents=(a,), vjp=lambda g: (g*value,))

def log(a):
    return Node(a.tape, np.log(a.value), parents=(a,), vjp=lambda g: (g/a.value,))

def sqrt(a):
    value = np.sqrt(a.value)
    return Node(a.tape, value, parents=(a,), vjp=lambda g: (0.5*g/value,))

def relu(a):
    mask = a.value > 0
    return Node(a.tape, np.where(mask, a.value, 0.), parents=(a,), vjp=lambda g: (g*mask,))


# Reductions and reshaping.

def _normalise_axis(axis, ndim):
    if axis is None: return tuple(range(ndim))
    if np.isscalar(axis): axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))

def sum(a, axis=None, keepdims=False):
    axes = _normalise_axis(axis, a.ndim)
    value = np.sum(a.value, axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims: g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return Node(a.tape, value, parents=(a,), vjp=vjp)

def mean(a, axis=None, keepdims=False):
    axes = _normalise_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(sum(a, axes, keepdims), 1./count)

def reshape(a, *shape):
    if len(shape) == 1 and not np.isscalar(shape[0]): shape = tuple(shape[0])
    value = a.value.reshape(shape)
    return Node(a.tape, value, parents=(a,), vjp=lambda g: (g.reshape(a.shape),))

def swap_last(a):
    if a.ndim < 2:
        raise ValueError('need at least two axes to transpose, got shape %r' % (a.shape,))
    return Node(a.tape, np.swapaxes(a.value, -1, -2), parents=(a,),
                vjp=lambda g: (np.swapaxes(g, -1, -2),))

def take(a, indices, axis=0):
    """Gather slices of a along axis 0 (e.g. codewords by message index)."""
    assert axis == 0
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[0]):
        raise ValueError('index out of range for axis of length %d' % a.shape[0])

    def vjp(g):
        grad = np.zeros(a.shape)
        np.add.at(grad, indices, g)
        return (grad,)

    return Node(a.tape, a.value[indices], parents=(a,), vjp=vjp)

def concatenate(nodes, axis=-1):
    tape = _tape_of(*nodes)
    value = np.concatenate([n.value for n in nodes], axis=axis)
    sizes = np.cumsum([n.shape[axis] for n in nodes])[:-1]
    return Node(tape, value, parents=nodes, vjp=lambda g: tuple(np.split(g, sizes, axis=axis)))


# Linear algebra.

def matmul(a, b):
    """Batched matrix product over the last two axes (with numpy broadcasting of leading axes)."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError('cannot multiply shapes %r and %r' % (a.shape, b.shape))
    try: np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError: raise ValueError('batch shapes %r and %r do not broadcast' % (a.shape, b.shape)) from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g) if b.requires_grad else None
        if ga is not None: ga = unbroadcast(ga, a.shape)
        if gb is not None: gb = unbroadcast(gb, b.shape)
        return ga, gb

    return Node(_tape_of(a, b), np.matmul(a.value, b.value), parents=(a, b), vjp=vjp)

def complex_matmul(a_re, a_im, b_re, b_im):
    """Complex product from real planes: (AB)re = AreBre - AimBim, (AB)im = AreBim + AimBre."""
    re = matmul(a_re, b_re) - matmul(a_im, b_im)
    im = matmul(a_re, b_im) + matmul(a_im, b_re)
    return re, im

def affine(W, x, b):
    """Row-batched affine map x W^T + b for x of shape (batch, in), W (out, in), b (out,)."""
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ValueError('affine shapes do not match: W %r, x %r, b %r' % (W.shape, x.shape, b.shape))
    return matmul(x, swap_last(W)) + b

def frobenius_sq_node(x, axis=None):
    """Sum of squares over axis (all axes by default)."""
    return sum(mul(x, x), axis)


# Network-specific primitives.

@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def fresh(cls, features):
        return cls(np.zeros(features), np.ones(features))

    def copy(self):
        return RunningStats(self.mean.copy(), self.var.copy())


def batchnorm(x, gamma, beta, mode, running, eps=BATCHNORM_EPS, momentum=BATCHNORM_MOMENTUM):
    """Per-feature batch normalisation of x with shape (batch, features).

    In 'train' mode the batch statistics are used and the running statistics are
    updated in place by an exponential moving average; in 'eval' mode the running
    statistics are used.
    """
    if mode not in ('train', 'eval'):
        raise ValueError('batchnorm mode must be train or eval, got %r' % mode)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError('batchnorm shapes do not match: x %r, gamma %r, beta %r' % (x.shape, gamma.shape, beta.shape))

    if mode == 'train':
        mu = x.value.mean(axis=0)
        var = x.value.var(axis=0)
        running.mean[:] = momentum*running.mean + (1 - momentum)*mu
        running.var[:] = momentum*running.var + (1 - momentum)*var
    else:
        mu, var = running.mean, running.var

    inv_std = 1/np.sqrt(var + eps)
    xhat = (x.value - mu) * inv_std
    value = gamma.value*xhat + beta.value

    def vjp(g):
        dgamma = np.sum(g*xhat, axis=0)
        dbeta = np.sum(g, axis=0)
        dxhat = g*gamma.value
        if mode == 'train':
            n = x.shape[0]
            dx = inv_std/n * (n*dxhat - dxhat.sum(axis=0) - xhat*np.sum(dxhat*xhat, axis=0))
        else:
            dx = dxhat*inv_std
        return dx, dgamma, dbeta

    return Node(_tape_of(x, gamma, beta), value, parents=(x, gamma, beta), vjp=vjp)


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label].

    Args:
        logits: node of shape (batch, classes), or (classes,) for a single example.
        labels: integer label(s) in [0, classes).
    """
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    values = logits.value if logits.ndim == 2 else logits.value[None]
    if values.ndim != 2 or labels.shape != (values.shape[0],):
        raise ValueError('logits %r do not match labels %r' % (logits.shape, labels.shape))
    if labels.min() < 0 or labels.max() >= values.shape[1]:
        raise ValueError('label out of range for %d classes' % values.shape[1])

    batch = np.arange(len(labels))
    losses = logsumexp(values, axis=1) - values[batch, labels]

    def vjp(g):
        grad = softmax(values, axis=1)
        grad[batch, labels] -= 1
        grad *= g/len(labels)
        return (grad.reshape(logits.shape),)

    return Node(logits.tape, losses.mean(), parents=(logits,), vjp=vjp)
