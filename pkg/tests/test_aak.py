from fractions import Fraction

import gmpy2
import numpy as np
import pytest

from walsh_lab import aak
from walsh_lab.errors import CoefficientRangeError, DomainError
from walsh_lab.numkernel import PrecisionContext, to_numpy
from walsh_lab.series import CATALOG, FunctionSpec, Pole, Scalar, taylor_coeffs

CTX = PrecisionContext(256)


@pytest.fixture(scope="module")
def three_pole():
    return taylor_coeffs(CATALOG["three-pole"], 2200, CTX)


def test_single_pole_rank_one_value():
    # 1/(2-z): f_k = 2^-(k+1), s_0 = (1/2)(1/2)/(1 - 1/4) = 1/3 at l = 0
    s = taylor_coeffs(CATALOG["single-pole"], 2200, CTX)
    spec = aak.aak_errors(s, 0, 0)
    with CTX.scope():
        assert abs(spec.values[0] - gmpy2.mpfr(1) / 3) < gmpy2.mpfr("1e-70")
    assert spec.converged and spec.N == aak.TRUNCATION_START


@pytest.mark.parametrize("c,a,l", [(Fraction(1, 3), Fraction(1, 2), 7), (Fraction(2), Fraction(2, 3), 3)])
def test_rank_one_closed_form(c, a, l):
    s = taylor_coeffs(FunctionSpec((Pole(Scalar(1 / a), (Scalar(c / a),)),)), 2200, CTX)
    exact = c * a ** (l + 1) / (1 - a**2)
    spec = aak.aak_errors(s, l, 0)
    got = spec.values[0]
    with CTX.scope():
        want = gmpy2.mpfr(gmpy2.mpq(exact.numerator, exact.denominator))
        # the adaptive stop only promises tail <= 1e-10 s_m; the true gap must sit inside the bound
        assert abs(got - want) <= spec.error_bound
        assert spec.error_bound <= gmpy2.mpfr("1e-10") * want


def test_matches_numpy_svd_of_small_block(three_pole):
    # fixed truncation N = 40: compare with a double-precision SVD of the same block
    spec = aak.aak_errors(three_pole, 5, 2, truncation=40)
    H = to_numpy(aak.build_weighted_hankel(three_pole, 3, 40)).real
    want = np.linalg.svd(H, compute_uv=False)[:3]
    got = np.array([float(v) for v in spec.values])
    assert np.allclose(got, want, rtol=0, atol=1e-13 * want[0])


def test_truncation_error_within_reported_bound(three_pole):
    coarse = aak.aak_errors(three_pole, 12, 2, truncation=64)
    fine = aak.aak_errors(three_pole, 12, 2, truncation=512)
    with CTX.scope():
        for k in range(3):
            assert abs(fine.values[k] - coarse.values[k]) <= coarse.error_bound + fine.error_bound


def test_kronecker_finite_rank():
    s = taylor_coeffs(CATALOG["two-pole"], 2200, CTX)
    spec = aak.aak_errors(s, 10, 2)
    assert spec.values[1] > 0
    assert spec.values[2] <= gmpy2.mpfr("1e-40") * spec.values[0]


def test_values_nonincreasing_and_decreasing_in_l(three_pole):
    a = aak.aak_errors(three_pole, 10, 2).values
    b = aak.aak_errors(three_pole, 11, 2).values
    assert a[0] >= a[1] >= a[2] > 0
    # shifting the symbol by one power can only shrink every singular value
    assert all(y <= x for x, y in zip(a, b))


def test_hilbert_schmidt_tail_matches_brute_force():
    s = taylor_coeffs(CATALOG["two-pole"], 60, CTX)
    l, N = 3, 10
    explicit, extrap = aak.hilbert_schmidt_tail(s, l, N)
    with CTX.scope():
        total = gmpy2.mpfr(0)
        for i in range(60):
            for j in range(60):
                k = l + 1 + i + j
                if (i >= N or j >= N) and k < len(s):
                    total += s[k] ** 2
        assert abs(explicit - gmpy2.sqrt(total)) < gmpy2.mpfr("1e-70")
    assert extrap > 0


def test_entire_symbol_needs_no_extrapolation():
    s = taylor_coeffs(CATALOG["exp"], 600, CTX)
    _, extrap = aak.hilbert_schmidt_tail(s, 0, 128)
    assert extrap == 0


def test_det_product_check_holds_and_unpacks(three_pole):
    for n in (4, 20, 36):
        det, product, holds = aak.det_vs_product_check(three_pole, n, 2)
        assert holds and det <= product * (1 + gmpy2.mpfr("1e-20"))


def test_bilinear_orthogonality(three_pole):
    spec = aak.aak_errors(three_pole, 9, 2, truncation=120)
    H = aak.build_weighted_hankel(three_pole, 7, 120)
    assert aak.bilinear_orthogonality_check(H, spec) < 1e-60
    with pytest.raises(DomainError):
        aak.bilinear_orthogonality_check(H[:, :100], spec)


def test_errors_and_cache(three_pole):
    with pytest.raises(DomainError):
        aak.aak_errors(three_pole, 1, 2)
    short = taylor_coeffs(CATALOG["two-pole"], 50, CTX)
    with pytest.raises(CoefficientRangeError):
        aak.aak_errors(short, 5, 1)
    assert aak.aak_errors(three_pole, 15, 1) is aak.aak_errors(three_pole, 15, 1)
    aak.clear_cache()
