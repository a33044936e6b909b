#!/usr/bin/env python3

import pytest
import numpy as np
from hypothesis import given, strategies as st

from noncoherentmimo.tensor import (ComplexMatrix, RngStream, sample_cn, conj_transpose, matmul,
                                    frobenius_sq, random_orthonormal_codewords)

dims = st.integers(min_value=1, max_value=5)
seeds = st.integers(min_value=0, max_value=2**32)


def test_complex_matrix():
    A = ComplexMatrix([[1, 2], [3, 4]], [[0, 1], [0, -1]])
    assert A.shape == (2, 2)
    assert A.rows == 2 and A.cols == 2
    assert A.batch_shape == ()
    assert np.array_equal(A.as_complex(), np.array([[1, 2+1j], [3, 4-1j]]))
    assert ComplexMatrix.from_complex(A.as_complex()) == A
    assert (A - A) == ComplexMatrix.zeros(2, 2)
    assert A.scale(2).allclose(A + A)

    with pytest.raises(ValueError):
        A.re[0, 0] = 5

    with pytest.raises(ValueError):
        ComplexMatrix(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ComplexMatrix(np.zeros(3), np.zeros(3))
    with pytest.raises(IndexError):
        A[0]

    batched = ComplexMatrix(np.zeros((4, 2, 3)), np.ones((4, 2, 3)))
    assert batched.batch_shape == (4,)
    assert batched[1].shape == (2, 3)


def test_identity():
    I = ComplexMatrix.identity(3)
    assert np.array_equal(I.re, np.eye(3))
    assert np.array_equal(I.im, np.zeros((3, 3)))


def test_rng_stream_reproducible():
    a = RngStream(7, 3).uniform(size=10)
    b = RngStream(7, 3).uniform(size=10)
    c = RngStream(7, 4).uniform(size=10)
    d = RngStream(8, 3).uniform(size=10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)

    rng = RngStream(7)
    assert rng.derive(3).stream == (3,)
    assert rng.derive(3).derive(1).stream == (3, 1)
    assert rng.derive(3).stream_id == 3
    assert np.array_equal(rng.derive(3).uniform(size=10), a)

    assert rng.derive_seed(0) == RngStream(7).derive_seed(0)
    assert rng.derive_seed(0) != rng.derive_seed(1)
    assert 0 <= rng.derive_seed(5) < 2**64

    with pytest.raises(ValueError):
        RngStream(-1)


def test_rng_normal():
    rng = RngStream(0)
    assert isinstance(rng.normal(), float)
    assert rng.normal(5).shape == (5,)
    assert rng.normal((2, 3)).shape == (2, 3)

    z = RngStream(1).normal(10**5)
    assert np.abs(np.mean(z)) < 0.02
    assert np.abs(np.var(z) - 1) < 0.02
    assert np.all(np.isfinite(z))


def test_integers():
    x = RngStream(2).integers(4, 10**4)
    assert x.min() == 0 and x.max() == 3
    assert np.all(np.abs(np.bincount(x)/len(x) - 0.25) < 0.02)


def test_sample_cn():
    with pytest.raises(ValueError):
        sample_cn(2, 2, -1., RngStream(0))

    Z = sample_cn(2, 2, 0., RngStream(0))
    assert Z == ComplexMatrix.zeros(2, 2)

    variance = 0.3
    Z = sample_cn(100, 1000, variance, RngStream(3))
    assert Z.shape == (100, 1000)
    assert np.abs(np.mean(Z.re**2 + Z.im**2) / variance - 1) < 0.02
    # Circular symmetry: real and imaginary parts uncorrelated with equal variance.
    assert np.abs(np.mean(Z.re*Z.im)) < 0.01*variance
    assert np.abs(np.var(Z.re) / np.var(Z.im) - 1) < 0.02

    assert sample_cn(3, 2, 1., RngStream(0), batch=(4, 5)).shape == (4, 5, 3, 2)
    assert sample_cn(3, 2, 1., RngStream(9)) == sample_cn(3, 2, 1., RngStream(9))


@given(dims, dims, dims, seeds)
def test_matmul_matches_complex_product(rows, inner, cols, seed):
    rng = RngStream(seed)
    A = sample_cn(rows, inner, 1., rng)
    B = sample_cn(inner, cols, 1., rng)
    C = matmul(A, B)
    assert C.shape == (rows, cols)
    assert np.allclose(C.as_complex(), A.as_complex() @ B.as_complex(), rtol=0, atol=1e-12)

    # (AB)^dagger = B^dagger A^dagger
    assert conj_transpose(C).allclose(matmul(conj_transpose(B), conj_transpose(A)))


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(ComplexMatrix.zeros(2, 3), ComplexMatrix.zeros(2, 3))


@given(dims, dims, seeds)
def test_frobenius_sq(rows, cols, seed):
    A = sample_cn(rows, cols, 1., RngStream(seed))
    assert np.isclose(frobenius_sq(A), np.linalg.norm(A.as_complex())**2, rtol=1e-12)

    # Trace identity ||A||^2 = tr(A A^dagger).
    G = matmul(A, conj_transpose(A))
    assert np.isclose(np.trace(G.re), frobenius_sq(A), rtol=1e-12)
    assert np.allclose(np.diag(G.im), 0, atol=1e-12)


def test_frobenius_sq_batched():
    A = sample_cn(2, 3, 1., RngStream(0), batch=(4,))
    norms = frobenius_sq(A)
    assert norms.shape == (4,)
    assert np.allclose(norms, [frobenius_sq(A[i]) for i in range(4)])


@pytest.mark.parametrize('m, L', [(1, 1), (1, 2), (2, 2), (2, 4), (3, 4), (4, 4)])
def test_random_orthonormal_codewords(m, L):
    codewords = random_orthonormal_codewords(8, m, L, RngStream(m*10 + L))
    assert len(codewords) == 8
    for X in codewords:
        assert X.shape == (m, L)
        gram = matmul(X, conj_transpose(X))
        assert gram.allclose(ComplexMatrix.identity(m).scale(L), atol=1e-10)


def test_random_orthonormal_codewords_too_many_antennas():
    with pytest.raises(ValueError):
        random_orthonormal_codewords(2, 3, 2, RngStream(0))
