#!/usr/bin/env python3
"""Block-fading non-coherent MIMO channel Y = H X + Z.

H (n x m) has i.i.d. CN(0, 1/m) entries and stays fixed over the L slots of one
codeword; Z (n x L) has i.i.d. CN(0, sigma2) entries. With unit average signal
power the SNR is 1/sigma2.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import ComplexMatrix, sample_cn, matmul
from . import autodiff as ad


def sigma2_from_snr_db(snr_db):
    return 10**(-snr_db/10)


@dataclass(frozen=True)
class OperatingPoint:
    """Experiment configuration: k message bits over L slots with m transmit and n receive antennas."""
    k: int
    L: int
    m: int
    n: int

    def __post_init__(self):
        for field in ('k', 'L', 'm', 'n'):
            if int(getattr(self, field)) < 1:
                raise ValueError('%s must be at least 1, got %r' % (field, getattr(self, field)))
            object.__setattr__(self, field, int(getattr(self, field)))

    @property
    def messages(self):
        return 2**self.k

    def channel(self, snr_db):
        return ChannelConfig(self.m, self.n, self.L, sigma2_from_snr_db(snr_db))

    def as_dict(self):
        return dict(k=self.k, L=self.L, m=self.m, n=self.n)

    def __str__(self):
        return 'k=%d L=%d m=%d n=%d' % (self.k, self.L, self.m, self.n)


@dataclass(frozen=True)
class ChannelConfig:
    m: int
    n: int
    L: int
    sigma2: float

    def __post_init__(self):
        for field in ('m', 'n', 'L'):
            if getattr(self, field) < 1:
                raise ValueError('%s must be at least 1, got %r' % (field, getattr(self, field)))
        # sigma2 = 0 is only meaningful for noiseless test fixtures.
        if not self.sigma2 >= 0:
            raise ValueError('noise variance must be non-negative, got %r' % self.sigma2)

    @property
    def snr_db(self):
        return -10*np.log10(self.sigma2)


def sample_channel(cfg, batch, rng):
    """Draw one channel matrix and one noise block per message.

    Returns:
        (H, Z) with shapes (*batch, n, m) and (*batch, n, L); H is drawn before Z.
    """
    batch = (int(batch),) if np.isscalar(batch) else tuple(batch)
    H = sample_cn(cfg.n, cfg.m, 1/cfg.m, rng, batch)
    Z = sample_cn(cfg.n, cfg.L, cfg.sigma2, rng, batch)
    return H, Z


def transmit(X, cfg, rng, H=None):
    """Send X (m x L, optionally batched) through the channel.

    Args:
        X: transmitted signal(s), shape (..., m, L)
        cfg: ChannelConfig
        rng: RngStream owned by the caller
        H: test hook forcing the channel realisation instead of sampling it
           (noise is still drawn)
    Returns:
        (Y, H): received signal(s) of shape (..., n, L) and the channel realisation(s).
        H is side-channel output for genie baselines and diagnostics only.
    Raises:
        ValueError: if X is not m x L.
    """
    if (X.rows, X.cols) != (cfg.m, cfg.L):
        raise ValueError('signal of shape %r does not match m=%d L=%d' % (X.shape, cfg.m, cfg.L))

    sampled_H, Z = sample_channel(cfg, X.batch_shape, rng)
    if H is None: H = sampled_H
    return matmul(H, X) + Z, H


def transmit_graph(x_re, x_im, H, Z):
    """Channel applied to codeword nodes on an autodiff tape.

    The channel and noise are fixed samples of the batch, so gradients reach only X.

    Args:
        x_re, x_im: nodes of shape (batch, m, L)
        H, Z: ComplexMatrix samples of shape (batch, n, m) and (batch, n, L)
    Returns:
        (y_re, y_im) nodes of shape (batch, n, L)
    """
    tape = x_re.tape
    h_re, h_im = tape.input(H.re), tape.input(H.im)
    y_re, y_im = ad.complex_matmul(h_re, h_im, x_re, x_im)
    return y_re + Z.re, y_im + Z.im
