from fractions import Fraction
from itertools import permutations

import gmpy2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walsh_lab.errors import ConvergenceError, DimensionError, NumericError
from walsh_lab.numkernel import (
    PrecisionContext,
    as_matrix,
    big,
    big_param,
    dominant_singular_values,
    fft,
    jacobi_svd,
    lu_det,
    to_numpy,
    truncated_svd,
)

CTX = PrecisionContext(256)


def exact_det(rows):
    """Leibniz expansion over permutations in exact rationals."""
    n = len(rows)
    total = Fraction(0)
    for perm in permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        term = Fraction(-1 if inversions % 2 else 1)
        for i, j in enumerate(perm):
            term *= rows[i][j]
        total += term
    return total


def test_precision_context_rejects_low_bits():
    with pytest.raises(ValueError):
        PrecisionContext(32)
    with pytest.raises(ValueError):
        PrecisionContext(128, round_mode="toward-zero")


def test_scope_sets_and_restores_precision():
    before = gmpy2.get_context().precision
    with PrecisionContext(300).scope():
        assert gmpy2.get_context().precision == 300
    assert gmpy2.get_context().precision == before


def test_overflow_is_trapped_as_numeric_error():
    with pytest.raises(NumericError):
        with CTX.scope():
            gmpy2.mpfr(10) ** (10**30)


def test_eps_is_power_of_two():
    assert CTX.eps() == gmpy2.mul_2exp(gmpy2.mpfr(1), -256)


def test_big_param_reads_floats_through_decimal_text():
    with CTX.scope():
        assert big_param(1.1) == gmpy2.mpfr(gmpy2.mpq(11, 10))
        assert big(1.1) != big_param(1.1)
        assert isinstance(big(complex(2, 0)), type(gmpy2.mpfr(1)))
        z = big("1.5-2j")
        assert z.real == gmpy2.mpfr("1.5") and z.imag == -2


def test_lu_det_small_hand_values():
    assert lu_det(as_matrix([[2, 0], [0, 3]], CTX), CTX) == 6
    assert lu_det(as_matrix([[1, 2], [2, 4]], CTX), CTX) == 0
    assert lu_det(as_matrix([[0, 1], [1, 0]], CTX), CTX) == -1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.lists(st.lists(st.integers(-2, 2), min_size=n, max_size=n), min_size=n, max_size=n)))
def test_lu_det_matches_exact_expansion(rows):
    want = exact_det([[Fraction(v) for v in r] for r in rows])
    got = lu_det(as_matrix(rows, CTX), CTX)
    with CTX.scope():
        assert abs(got - gmpy2.mpfr(gmpy2.mpq(want.numerator, want.denominator))) <= gmpy2.mpfr("1e-60") * max(1, abs(want))


def test_lu_det_rational_entries_exact_oracle():
    rows = [[Fraction(1, i + j + 1) for j in range(4)] for i in range(4)]
    want = exact_det(rows)
    got = lu_det(as_matrix(rows, CTX), CTX)
    with CTX.scope():
        w = gmpy2.mpfr(gmpy2.mpq(want.numerator, want.denominator))
        assert abs(got - w) / w < gmpy2.mpfr("1e-70")


def test_lu_det_multiplicative():
    rng = np.random.default_rng(3)
    A = rng.integers(-3, 4, (5, 5)).tolist()
    B = rng.integers(-3, 4, (5, 5)).tolist()
    AB = (np.array(A) @ np.array(B)).tolist()
    with CTX.scope():
        dA, dB, dAB = (lu_det(as_matrix(x, CTX), CTX) for x in (A, B, AB))
        assert abs(dA * dB - dAB) <= gmpy2.mpfr("1e-60") * max(1, abs(dAB))


def test_lu_det_non_square():
    with pytest.raises(DimensionError):
        lu_det(as_matrix([[1, 2, 3], [4, 5, 6]], CTX), CTX)


def test_jacobi_matches_numpy_svd():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((8, 8))
    values, V = jacobi_svd(as_matrix(A.tolist(), CTX), CTX)
    want = np.linalg.svd(A, compute_uv=False)
    assert np.allclose([float(v) for v in values], want, rtol=1e-12, atol=0)
    # right vectors satisfy |A v| = s
    Vn = to_numpy(V).real
    assert np.allclose(np.linalg.norm(A @ Vn, axis=0), want, rtol=1e-12)


def test_jacobi_complex_matrix_matches_numpy():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
    values, V = jacobi_svd(as_matrix(A.tolist(), CTX), CTX)
    assert np.allclose([float(v) for v in values], np.linalg.svd(A, compute_uv=False), rtol=1e-12)
    Vn = to_numpy(V)
    assert np.allclose(Vn.conj().T @ Vn, np.eye(5), atol=1e-12)


def test_jacobi_reconstruction_at_full_precision():
    rows = [[Fraction(1, i + j + 1) for j in range(5)] for i in range(5)]
    M = as_matrix(rows, CTX)
    values, V = jacobi_svd(M, CTX)
    with CTX.scope():
        AV = M @ V
        for j in range(5):
            norm = gmpy2.sqrt(sum(x * x for x in AV[:, j]))
            assert abs(norm - values[j]) <= gmpy2.mpfr("1e-60") * values[0]


def test_jacobi_zero_diagonal_and_rank_one():
    z = jacobi_svd(as_matrix([[0, 0], [0, 0]], CTX), CTX)[0]
    assert z == [0, 0]
    d = jacobi_svd(as_matrix([[3, 0, 0], [0, -5, 0], [0, 0, 1]], CTX), CTX)[0]
    assert d == [5, 3, 1]
    u = [1, 2, 3]
    r1 = jacobi_svd(as_matrix([[a * b for b in u] for a in u], CTX), CTX)[0]
    with CTX.scope():
        assert abs(r1[0] - 14) < gmpy2.mpfr("1e-70")
    assert r1[1] == 0 and r1[2] == 0


def test_jacobi_reports_nonconvergence():
    rng = np.random.default_rng(1)
    with pytest.raises(ConvergenceError) as info:
        jacobi_svd(as_matrix(rng.standard_normal((6, 6)).tolist(), CTX), CTX, max_sweeps=1)
    assert info.value.residual > 0


def test_dominant_count_bounds():
    M = as_matrix([[1, 2], [3, 4]], CTX)
    with pytest.raises(DimensionError):
        dominant_singular_values(M, 3, CTX)
    assert len(dominant_singular_values(M, 1, CTX)) == 1


def test_truncated_svd_agrees_with_full_jacobi_on_hilbert_like():
    n = 40
    rows = [[Fraction(1, 2 ** (i + j)) + Fraction(1, 3 ** (i + j)) + Fraction(1, (i + j + 1) ** 6) for j in range(n)] for i in range(n)]
    M = as_matrix(rows, CTX)
    full, _ = jacobi_svd(M, CTX)
    t = truncated_svd(M, 3, CTX)
    with CTX.scope():
        for k in range(3):
            assert abs(t.values[k] - full[k]) <= t.residual + gmpy2.mpfr("1e-70") * full[0]
    assert t.rank < n
    assert t.right_vectors.shape == (n, 3)


def test_truncated_svd_count_checked():
    with pytest.raises(DimensionError):
        truncated_svd(as_matrix([[1, 2]], CTX), 2, CTX)


def test_fft_matches_numpy():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    X = to_numpy(fft(x.tolist(), CTX)[None, :])[0]
    assert np.allclose(X, np.fft.fft(x), atol=1e-12)
    back = to_numpy(fft(fft(x.tolist(), CTX), CTX, inverse=True)[None, :])[0] / 16
    assert np.allclose(back, x, atol=1e-12)


def test_fft_needs_power_of_two():
    with pytest.raises(DimensionError):
        fft([1, 2, 3], CTX)
