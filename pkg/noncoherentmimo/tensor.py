#!/usr/bin/env python3
"""Dense complex matrices and reproducible random streams.

A ComplexMatrix keeps separate real and imaginary planes. The planes may
carry leading batch axes, in which case the last two axes are (rows, cols)
and every operation here acts matrix-wise over the batch.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ComplexMatrix:
    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.array(self.re, dtype=np.float64)
        im = np.array(self.im, dtype=np.float64)
        if re.shape != im.shape:
            raise ValueError('real and imaginary planes differ in shape: %r vs %r' % (re.shape, im.shape))
        if re.ndim < 2:
            raise ValueError('complex matrix needs at least two axes, got shape %r' % (re.shape,))
        re.flags.writeable = False
        im.flags.writeable = False
        object.__setattr__(self, 're', re)
        object.__setattr__(self, 'im', im)

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z)
        return cls(z.real, z.imag)

    @classmethod
    def zeros(cls, *shape):
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.zeros((n, n)))

    @property
    def shape(self):
        return self.re.shape

    @property
    def rows(self):
        return self.re.shape[-2]

    @property
    def cols(self):
        return self.re.shape[-1]

    @property
    def batch_shape(self):
        return self.re.shape[:-2]

    def as_complex(self):
        return self.re + 1j*self.im

    def __getitem__(self, index):
        """Select along the batch axes only."""
        if not self.batch_shape:
            raise IndexError('cannot index an unbatched complex matrix')
        return ComplexMatrix(self.re[index], self.im[index])

    def __add__(self, other):
        return ComplexMatrix(self.re + other.re, self.im + other.im)

    def __sub__(self, other):
        return ComplexMatrix(self.re - other.re, self.im - other.im)

    def scale(self, c):
        return ComplexMatrix(c*self.re, c*self.im)

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.re, other.re, rtol=0, atol=atol) and \
               np.allclose(self.im, other.im, rtol=0, atol=atol)

    def __eq__(self, other):
        if not isinstance(other, ComplexMatrix): return NotImplemented
        return np.array_equal(self.re, other.re) and np.array_equal(self.im, other.im)

    def __repr__(self):
        return '<ComplexMatrix shape=%r>' % (self.shape,)


class RngStream:
    """Reproducible random stream identified by (seed, stream path).

    Streams are derived from numpy's SeedSequence, so the same (seed, path)
    gives the same bits everywhere and distinct paths give independent streams.
    A stream must have a single owner; parallel work derives its own streams.
    """

    def __init__(self, seed, *stream):
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        if self.seed < 0 or any(s < 0 for s in self.stream):
            raise ValueError('seed and stream ids must be non-negative')
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    @property
    def stream_id(self):
        return self.stream[-1] if self.stream else 0

    def derive(self, *stream):
        """Child stream, independent of this one and of its other children."""
        return RngStream(self.seed, *self.stream, *stream)

    def derive_seed(self, *stream):
        """64-bit integer seed for a child, e.g. to seed a separate training run."""
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream + tuple(stream))
        return int(sequence.generate_state(1, np.uint64)[0])

    def uniform(self, low=0., high=1., size=None):
        return low + (high - low)*self.generator.random(size)

    def integers(self, high, size=None):
        return self.generator.integers(0, high, size=size)

    def normal(self, size=None):
        """Standard normal samples by the Box-Muller transform.

        Only uniform draws are consumed, so results depend on nothing but the
        PCG64 bit stream.
        """
        shape = () if size is None else tuple(np.atleast_1d(size))
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        u1 = 1. - self.generator.random(pairs)  # in (0, 1] so the log is finite
        u2 = self.generator.random(pairs)
        radius = np.sqrt(-2*np.log(u1))
        z = np.concatenate((radius*np.cos(2*np.pi*u2), radius*np.sin(2*np.pi*u2)))
        z = z[:count].reshape(shape)
        return float(z) if size is None else z

    def __repr__(self):
        return '<RngStream seed=%d stream=%r>' % (self.seed, self.stream)


def sample_cn(rows, cols, variance, rng, batch=()):
    """Circularly-symmetric complex Gaussian matrix with i.i.d. CN(0, variance) entries.

    Args:
        rows, cols: matrix dimensions.
        variance: per complex entry; each of the real and imaginary parts gets variance/2.
        rng: RngStream to draw from.
        batch: leading batch shape.
    Raises:
        ValueError: if variance is negative.
    """
    if variance < 0:
        raise ValueError('variance must be non-negative, got %r' % variance)
    shape = tuple(batch) + (rows, cols)
    std = np.sqrt(variance/2)
    re = std*rng.normal(shape)
    im = std*rng.normal(shape)
    return ComplexMatrix(re, im)


def conj_transpose(A):
    return ComplexMatrix(np.swapaxes(A.re, -1, -2), -np.swapaxes(A.im, -1, -2))


def matmul(A, B):
    if A.cols != B.rows:
        raise ValueError('cannot multiply %r by %r' % (A.shape, B.shape))
    re = np.matmul(A.re, B.re) - np.matmul(A.im, B.im)
    im = np.matmul(A.re, B.im) + np.matmul(A.im, B.re)
    return ComplexMatrix(re, im)


def frobenius_sq(A):
    """Squared Frobenius norm, per matrix when A is batched."""
    norm = np.sum(A.re**2 + A.im**2, axis=(-2, -1))
    return float(norm) if norm.ndim == 0 else norm


def random_orthonormal_codewords(count, m, L, rng):
    """Random m x L matrices X with X X^dagger = L I_m.

    Each is built by orthonormalising a Gaussian sample (QR) and scaling by sqrt(L).

    Raises:
        ValueError: if m > L, since m orthonormal rows of length L cannot exist.
    """
    if m > L:
        raise ValueError('cannot build %d orthonormal rows of length %d' % (m, L))

    codewords = []
    for i in range(count):
        G = sample_cn(L, m, 1., rng).as_complex()
        Q, _ = np.linalg.qr(G)
        codewords += [ComplexMatrix.from_complex(np.sqrt(L) * Q.conj().T)]
    return codewords
