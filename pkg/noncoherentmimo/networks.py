#!/usr/bin/env python3
"""Decoder networks: a plain multilayer perceptron and a residual MLP with batch norm.

Both map the real-vectorised received signal (length 2nL) to 2^k logits and are
built as graphs on an autodiff tape, so the same code serves training and inference.
"""

from dataclasses import dataclass, field

import numpy as np

from .classproperty import classproperty
from . import autodiff as ad


@dataclass(frozen=True)
class NetArch:
    family: str
    depth: int
    hidden: int
    input_width: int
    output_width: int

    def __post_init__(self):
        if self.family not in NETWORKS:
            raise ValueError('unknown network family %r (choose from %s)' % (self.family, ', '.join(NETWORKS)))
        minimum_depth = NETWORKS[self.family].minimum_depth
        if self.depth < minimum_depth:
            raise ValueError('%s needs depth >= %d, got %d' % (self.family, minimum_depth, self.depth))
        if self.hidden < 1 or self.input_width < 1 or self.output_width < 1:
            raise ValueError('layer widths must be positive: %r' % (self,))

    def as_dict(self):
        return dict(family=self.family, depth=self.depth, hidden=self.hidden,
                    input_width=self.input_width, output_width=self.output_width)


@dataclass
class NetWeights:
    params: dict
    running: dict = field(default_factory=dict)

    def copy(self):
        return NetWeights({name: value.copy() for name, value in self.params.items()},
                          {name: stats.copy() for name, stats in self.running.items()})


class Network:
    minimum_depth = 0

    def __init__(self, arch, weights):
        if arch.family != self.family:
            raise ValueError('%s cannot be built from a %s architecture' % (self.family, arch.family))
        self.arch = arch
        self.weights = weights

        expected = self.parameter_shapes(arch)
        actual = {name: value.shape for name, value in weights.params.items()}
        if expected != actual:
            raise ValueError('weights do not match architecture %r' % (arch,))
        for name in self.batchnorm_units(arch):
            stats = weights.running.get(name)
            if stats is None or stats.mean.shape != (arch.hidden,) or np.any(stats.var <= 0):
                raise ValueError('missing or invalid running statistics for %s' % name)

    @classproperty
    def family(cls):
        return cls.__name__.lower()

    @classmethod
    def parameter_shapes(cls, arch):
        raise NotImplementedError('should only be called from a derived network!')

    @classmethod
    def batchnorm_units(cls, arch):
        return []

    @classmethod
    def build(cls, arch, rng):
        """Fresh network with initialised weights, ready to be put on a tape by graph()."""
        return cls(arch, init_weights(arch, rng))

    @property
    def num_parameters(self):
        return sum(value.size for value in self.weights.params.values())

    def copy(self):
        return type(self)(self.arch, self.weights.copy())

    def graph(self, x, mode='eval'):
        """Put the network on x's tape.

        Args:
            x: input node of shape (batch, input_width)
            mode: 'train' uses batch statistics in batch norm (updating the running
                  statistics), 'eval' uses the running statistics
        Returns:
            (logits node of shape (batch, output_width), dict of parameter nodes)
        """
        if x.ndim != 2 or x.shape[1] != self.arch.input_width:
            raise ValueError('network expects input of width %d, got shape %r' % (self.arch.input_width, x.shape))
        params = {name: x.tape.parameter(value, name) for name, value in self.weights.params.items()}
        return self.forward(x, params, mode), params

    def forward(self, x, params, mode):
        raise NotImplementedError('should only be called from a derived network!')

    def __call__(self, x, mode='eval'):
        """Numerical forward pass on an array of shape (batch, input_width)."""
        tape = ad.Tape()
        logits, _ = self.graph(tape.input(np.atleast_2d(x)), mode)
        return logits.value

    def __repr__(self):
        return '<%s depth=%d hidden=%d %d->%d>' % (self.family, self.arch.depth, self.arch.hidden,
                                                   self.arch.input_width, self.arch.output_width)


class MLP(Network):
    """x_{i+1} = phi_i(W_i x_i + b_i) with ReLU on the l hidden layers and identity on the output."""

    @classmethod
    def parameter_shapes(cls, arch):
        widths = [arch.input_width] + [arch.hidden]*arch.depth + [arch.output_width]
        shapes = {}
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            shapes['W%d' % i] = (fan_out, fan_in)
            shapes['b%d' % i] = (fan_out,)
        return shapes

    def forward(self, x, params, mode):
        for i in range(self.arch.depth):
            x = ad.relu(ad.affine(params['W%d' % i], x, params['b%d' % i]))
        last = self.arch.depth
        return ad.affine(params['W%d' % last], x, params['b%d' % last])


class ResMLP(Network):
    """Residual MLP.

    h_0 = W_0 x + b_0, then l blocks h_i = F_{2i}(F_{2i-1}(h_{i-1})) + h_{i-1} where each
    unit F_j(h) = W_j relu(BatchNorm_j(h)) + b_j, and an output unit 2l+1 of the same form.
    """
    minimum_depth = 1

    @classmethod
    def units(cls, arch):
        return range(1, 2*arch.depth + 2)

    @classmethod
    def parameter_shapes(cls, arch):
        shapes = {'W0': (arch.hidden, arch.input_width), 'b0': (arch.hidden,)}
        for j in cls.units(arch):
            fan_out = arch.output_width if j == 2*arch.depth + 1 else arch.hidden
            shapes['gamma%d' % j] = (arch.hidden,)
            shapes['beta%d' % j] = (arch.hidden,)
            shapes['W%d' % j] = (fan_out, arch.hidden)
            shapes['b%d' % j] = (fan_out,)
        return shapes

    @classmethod
    def batchnorm_units(cls, arch):
        return ['bn%d' % j for j in cls.units(arch)]

    def unit(self, j, h, params, mode):
        h = ad.batchnorm(h, params['gamma%d' % j], params['beta%d' % j], mode, self.weights.running['bn%d' % j])
        return ad.affine(params['W%d' % j], ad.relu(h), params['b%d' % j])

    def forward(self, x, params, mode):
        h = ad.affine(params['W0'], x, params['b0'])
        for i in range(1, self.arch.depth + 1):
            h = self.unit(2*i, self.unit(2*i - 1, h, params, mode), params, mode) + h
        return self.unit(2*self.arch.depth + 1, h, params, mode)


NETWORKS = {cls.family: cls for cls in (MLP, ResMLP)}


def init_weights(arch, rng):
    """Glorot-uniform affine weights, zero biases, unit batch-norm scale and zero shift."""
    network = NETWORKS[arch.family]
    params = {}
    for name, shape in network.parameter_shapes(arch).items():
        if name.startswith('W'):
            fan_out, fan_in = shape
            limit = np.sqrt(6/(fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, shape)
        elif name.startswith('gamma'):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    running = {name: ad.RunningStats.fresh(arch.hidden) for name in network.batchnorm_units(arch)}
    return NetWeights(params, running)


def build_mlp(arch, rng):
    if arch.family != MLP.family:
        raise ValueError('build_mlp needs an mlp architecture, got %r' % arch.family)
    return MLP.build(arch, rng)


def build_resmlp(arch, rng):
    if arch.family != ResMLP.family:
        raise ValueError('build_resmlp needs a resmlp architecture, got %r' % arch.family)
    return ResMLP.build(arch, rng)


def build_network(arch, rng):
    return NETWORKS[arch.family].build(arch, rng)


def network_from_weights(arch, weights):
    return NETWORKS[arch.family](arch, weights)


def mlp_parameter_count(depth, hidden, input_width, output_width):
    if depth == 0:
        return input_width*output_width + output_width
    return input_width*hidden + hidden + (depth - 1)*(hidden**2 + hidden) + hidden*output_width + output_width
