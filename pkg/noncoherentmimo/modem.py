#!/usr/bin/env python3
"""Lookup-table encoder and soft-output decoders.

Conventions frozen into artifacts:
  * a codebook row of length mL is reshaped antenna-major: entries [0, L) are
    antenna 0 over slots 0..L-1, entries [L, 2L) antenna 1, and so on;
  * message bits are read MSB-first, so bits (1, 0) are message 2;
  * the network input is the real plane of Y (row-major) followed by its
    imaginary plane.

Decoders output unnormalised logits; softmax is applied only where a posterior
is needed.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, LinAlgError
from scipy.special import softmax as _softmax

from .tensor import ComplexMatrix, sample_cn, frobenius_sq
from . import autodiff as ad

RESHAPE_CONVENTION = 'antenna-major'
BIT_ORDER = 'msb-first'
NN_INPUT_ORDER = 're-block-then-im-block'


class DegenerateCodebookError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class NonFiniteCodebookError(NumericError, ValueError):
    pass


def message_from_bits(bits):
    """Integer message for a bit vector, most significant bit first."""
    message = 0
    for bit in bits:
        if bit not in (0, 1):
            raise ValueError('bits must be 0 or 1, got %r' % (bit,))
        message = 2*message + int(bit)
    return message


def bits_from_message(message, k):
    if not 0 <= message < 2**k:
        raise ValueError('message %d out of range for k=%d' % (message, k))
    return tuple((message >> (k - 1 - i)) & 1 for i in range(k))


@dataclass(frozen=True)
class RawCodebook:
    """Unconstrained learnable codebook C with 2^k rows of length mL."""
    k: int
    m: int
    L: int
    C: ComplexMatrix

    def __post_init__(self):
        if self.C.shape != (2**self.k, self.m*self.L):
            raise ValueError('raw codebook of shape %r does not match k=%d m=%d L=%d'
                             % (self.C.shape, self.k, self.m, self.L))
        if not (np.all(np.isfinite(self.C.re)) and np.all(np.isfinite(self.C.im))):
            raise NonFiniteCodebookError('raw codebook has non-finite entries')

    @classmethod
    def random(cls, k, m, L, rng):
        return cls(k, m, L, sample_cn(2**k, m*L, 1., rng))


@dataclass(frozen=True)
class Codebook:
    """Constellation {X_msg}: codewords has shape (2^k, m, L)."""
    k: int
    m: int
    L: int
    codewords: ComplexMatrix

    def __post_init__(self):
        if self.codewords.shape != (2**self.k, self.m, self.L):
            raise ValueError('codewords of shape %r do not match k=%d m=%d L=%d'
                             % (self.codewords.shape, self.k, self.m, self.L))

    @classmethod
    def from_codewords(cls, codewords):
        """Stack a list of m x L codewords (whose count must be a power of two)."""
        k = int(np.log2(len(codewords)))
        if 2**k != len(codewords):
            raise ValueError('need a power-of-two number of codewords, got %d' % len(codewords))
        re = np.stack([X.re for X in codewords])
        im = np.stack([X.im for X in codewords])
        return cls(k, re.shape[1], re.shape[2], ComplexMatrix(re, im))

    @classmethod
    def from_rows(cls, k, m, L, rows):
        """Inverse of the rows property: reshape (2^k, mL) rows antenna-major."""
        shape = (2**k, m, L)
        return cls(k, m, L, ComplexMatrix(rows.re.reshape(shape), rows.im.reshape(shape)))

    @property
    def messages(self):
        return 2**self.k

    @property
    def rows(self):
        shape = (self.messages, self.m*self.L)
        return ComplexMatrix(self.codewords.re.reshape(shape), self.codewords.im.reshape(shape))

    @property
    def average_power(self):
        return float(np.sum(frobenius_sq(self.codewords))) / (self.messages*self.m*self.L)

    @property
    def mean_codeword(self):
        return ComplexMatrix(self.codewords.re.mean(axis=0), self.codewords.im.mean(axis=0))


# Graph builders shared by training (on a gradient tape) and inference.

def normalized_codewords_graph(c_re, c_im, m, L):
    """Centre the rows of C, scale to unit average power and reshape each row to m x L.

    Raises:
        DegenerateCodebookError: if the centred codebook vanishes (all rows identical).
        NonFiniteCodebookError: if C holds non-finite entries or its power overflows.
    """
    K = c_re.shape[0]
    cbar_re = c_re - c_re.mean(axis=0, keepdims=True)
    cbar_im = c_im - c_im.mean(axis=0, keepdims=True)
    norm = ad.frobenius_sq_node(cbar_re) + ad.frobenius_sq_node(cbar_im)

    raw_norm = np.sum(c_re.value**2) + np.sum(c_im.value**2)
    if not np.isfinite(norm.value):
        raise NonFiniteCodebookError('codebook power is not finite')
    if not norm.value > 1e-20*raw_norm:
        raise DegenerateCodebookError('codebook rows are all identical, nothing is left after centring')

    factor = ad.sqrt((K*m*L) / norm)
    x_re = ad.reshape(cbar_re*factor, K, m, L)
    x_im = ad.reshape(cbar_im*factor, K, m, L)
    return x_re, x_im


def orthonormal_loss_graph(x_re, x_im):
    """Mean over codewords of ||X X^dagger / L - I_m||^2 / m^2."""
    K, m, L = x_re.shape
    g_re, g_im = ad.complex_matmul(x_re, x_im, x_re.mT, -x_im.mT)
    deviation = ad.frobenius_sq_node(g_re/L - np.eye(m)) + ad.frobenius_sq_node(g_im/L)
    return deviation / (K*m*m)


def pml_logits_graph(y_re, y_im, x_re, x_im, theta):
    """theta ||Y X_msg^dagger||^2 for every message.

    Args:
        y_re, y_im: received signals, shape (..., n, L)
        x_re, x_im: codewords, shape (2^k, m, L)
        theta: non-negative scale (float or scalar node)
    Returns:
        logits node of shape (..., 2^k)
    """
    if y_re.shape[-1] != x_re.shape[-1]:
        raise ValueError('received signal %r does not match codewords %r' % (y_re.shape, x_re.shape))
    shape = y_re.shape[:-2] + (1,) + y_re.shape[-2:]
    y_re, y_im = ad.reshape(y_re, shape), ad.reshape(y_im, shape)
    p_re, p_im = ad.complex_matmul(y_re, y_im, x_re.mT, -x_im.mT)
    energy = ad.frobenius_sq_node(p_re, (-2, -1)) + ad.frobenius_sq_node(p_im, (-2, -1))
    return energy * theta


def nn_input_graph(y_re, y_im):
    """Real vectorisation of Y: real plane row-major, then imaginary plane; shape (batch, 2nL)."""
    n, L = y_re.shape[-2:]
    batch = int(np.prod(y_re.shape[:-2], dtype=np.int64))
    return ad.concatenate([ad.reshape(y_re, batch, n*L), ad.reshape(y_im, batch, n*L)], axis=1)


# Encoder.

def normalize_codebook(raw):
    tape = ad.Tape()
    x_re, x_im = normalized_codewords_graph(tape.input(raw.C.re), tape.input(raw.C.im), raw.m, raw.L)
    return Codebook(raw.k, raw.m, raw.L, ComplexMatrix(x_re.value, x_im.value))


def encode(cb, msg):
    """Codeword(s) X_msg; msg may be an integer or an integer array (batched output)."""
    msg = np.asarray(msg)
    if not np.issubdtype(msg.dtype, np.integer):
        raise ValueError('messages must be integers, got %r' % (msg.dtype,))
    if msg.size and (msg.min() < 0 or msg.max() >= cb.messages):
        raise ValueError('message out of range [0, %d)' % cb.messages)
    return ComplexMatrix(cb.codewords.re[msg], cb.codewords.im[msg])


def orthonormal_loss(cb):
    tape = ad.Tape()
    loss = orthonormal_loss_graph(tape.input(cb.codewords.re), tape.input(cb.codewords.im))
    return float(loss.value)


# Decoding.

def softmax(logits):
    """Posterior from logits along the last axis (max-subtracted for overflow safety)."""
    return _softmax(np.asarray(logits, dtype=np.float64), axis=-1)


def hard_decision(logits):
    """Index of the largest logit along the last axis; ties go to the lowest index."""
    logits = np.asarray(logits)
    if logits.shape[-1] == 0:
        raise ValueError('cannot decide on empty logits')
    decision = np.argmax(logits, axis=-1)
    return int(decision) if decision.ndim == 0 else decision


def _check_received(Y, cb, n=None):
    if Y.cols != cb.L or (n is not None and Y.rows != n):
        raise ValueError('received signal of shape %r does not match the codebook (L=%d)' % (Y.shape, cb.L))


def pml_logits(Y, cb, theta):
    if theta < 0:
        raise ValueError('theta must be non-negative, got %r' % theta)
    _check_received(Y, cb)
    tape = ad.Tape()
    logits = pml_logits_graph(tape.input(Y.re), tape.input(Y.im),
                              tape.input(cb.codewords.re), tape.input(cb.codewords.im), float(theta))
    return logits.value


def nn_logits(Y, net):
    """Network logits for one received signal (n x L) or a batch (..., n, L)."""
    network = getattr(net, 'network', net)
    if 2*Y.rows*Y.cols != network.arch.input_width:
        raise ValueError('network input width %d does not match 2nL = %d'
                         % (network.arch.input_width, 2*Y.rows*Y.cols))
    tape = ad.Tape()
    x = nn_input_graph(tape.input(Y.re), tape.input(Y.im))
    logits, _ = network.graph(x, 'eval')
    return logits.value.reshape(Y.batch_shape + (network.arch.output_width,))


def exact_ml_factors(cb, sigma2):
    """Inverse covariances and log-determinants of the received rows under each codeword.

    Conditioned on X, each row of Y is CN(0, sigma2 I_L + X^dagger X / m).
    """
    if not sigma2 > 0:
        raise ValueError('exact ML needs a positive noise variance, got %r' % sigma2)
    X = cb.codewords.as_complex()
    cov = sigma2*np.eye(cb.L) + np.matmul(X.conj().swapaxes(-1, -2), X) / cb.m

    inverses = np.empty_like(cov)
    logdets = np.empty(cb.messages)
    identity = np.eye(cb.L)
    for i, c in enumerate(cov):
        try:
            chol = cholesky(c, lower=True)
        except LinAlgError as e:
            raise NumericError('covariance of codeword %d is not positive definite' % i) from e
        inverse_chol = np.linalg.solve(chol, identity)
        inverses[i] = inverse_chol.conj().T @ inverse_chol
        logdets[i] = 2*np.sum(np.log(np.real(np.diag(chol))))
    return inverses, logdets


def exact_ml_logits(Y, cb, sigma2):
    """Exact log-likelihoods -sum_j y_j Lambda^-1 y_j^dagger - n ln det Lambda (message-independent constants dropped)."""
    _check_received(Y, cb)
    inverses, logdets = exact_ml_factors(cb, sigma2)
    y = Y.as_complex()
    quadratic = np.einsum('...nl,klp,...np->...k', y, inverses, y.conj(), optimize=True).real
    return -quadratic - Y.rows*logdets


def coherent_ml_logits(Y, H, cb, sigma2):
    """Genie log-likelihoods -||Y - H X_msg||^2 / (2 sigma2) given the true channel H."""
    if not sigma2 > 0:
        raise ValueError('coherent ML needs a positive noise variance, got %r' % sigma2)
    _check_received(Y, cb)
    if H.cols != cb.m or H.rows != Y.rows or H.batch_shape != Y.batch_shape:
        raise ValueError('channel of shape %r does not match received signal %r' % (H.shape, Y.shape))

    h = H.as_complex()[..., None, :, :]
    residual = Y.as_complex()[..., None, :, :] - np.matmul(h, cb.codewords.as_complex())
    return -np.sum(np.abs(residual)**2, axis=(-2, -1)) / (2*sigma2)


class Decoder:
    """Soft-output decoder interface: logits(Y, codebook, H, sigma2) -> (..., 2^k)."""
    variant = None
    trainable = False
    requires_channel = False

    def logits(self, Y, cb, H=None, sigma2=None):
        raise NotImplementedError('should only be called from a derived decoder!')

    def posterior(self, Y, cb, H=None, sigma2=None):
        return softmax(self.logits(Y, cb, H, sigma2))

    def decide(self, Y, cb, H=None, sigma2=None):
        return hard_decision(self.logits(Y, cb, H, sigma2))


class PseudoMLDecoder(Decoder):
    variant = 'pml'
    trainable = True

    def __init__(self, theta):
        if not theta >= 0:
            raise ValueError('theta must be non-negative, got %r' % theta)
        self.theta = float(theta)

    def logits(self, Y, cb, H=None, sigma2=None):
        return pml_logits(Y, cb, self.theta)

    def copy(self):
        return PseudoMLDecoder(self.theta)

    def __repr__(self):
        return '<PseudoMLDecoder theta=%.6g>' % self.theta


class NeuralDecoder(Decoder):
    trainable = True

    def __init__(self, network):
        self.network = network

    @property
    def variant(self):
        return self.network.family

    def logits(self, Y, cb, H=None, sigma2=None):
        if self.network.arch.output_width != cb.messages:
            raise ValueError('network has %d outputs but the codebook has %d messages'
                             % (self.network.arch.output_width, cb.messages))
        return nn_logits(Y, self.network)

    def copy(self):
        return NeuralDecoder(self.network.copy())

    def __repr__(self):
        return '<NeuralDecoder %r>' % self.network


class ExactMLDecoder(Decoder):
    """Exact non-coherent ML; with sigma2=None it uses the simulated channel's noise level."""
    variant = 'exactml'

    def __init__(self, sigma2=None):
        self.sigma2 = sigma2

    def logits(self, Y, cb, H=None, sigma2=None):
        return exact_ml_logits(Y, cb, self.sigma2 if self.sigma2 is not None else sigma2)

    def copy(self):
        return ExactMLDecoder(self.sigma2)


class CoherentMLDecoder(Decoder):
    """Genie baseline that is handed the true channel; evaluation only."""
    variant = 'coherentml'
    requires_channel = True

    def __init__(self, sigma2=None):
        self.sigma2 = sigma2

    def logits(self, Y, cb, H=None, sigma2=None):
        if H is None:
            raise ValueError('coherent ML decoding needs the true channel realisation')
        return coherent_ml_logits(Y, H, cb, self.sigma2 if self.sigma2 is not None else sigma2)

    def copy(self):
        return CoherentMLDecoder(self.sigma2)
