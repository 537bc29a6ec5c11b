import math
from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walsh_lab.errors import CoefficientRangeError, DomainError
from walsh_lab.hankel import (
    big_hankel_det,
    hadamard_radii,
    hankel_det,
    hankel_matrix,
    l_sequence,
    verify_scaling_identity,
)
from walsh_lab.numkernel import PrecisionContext
from walsh_lab.series import CATALOG, CoefficientStream, taylor_coeffs

from test_numkernel import exact_det

CTX = PrecisionContext(256)


def exact_two_pole(k):
    return Fraction(1, 2 ** (k + 1)) + Fraction(1, 3 ** (k + 1)) if k >= 0 else Fraction(0)


def exact_hankel_det(coeff, n, m):
    return exact_det([[coeff(n + m - 1 - i - j) for j in range(m)] for i in range(m)])


def test_matrix_layout_and_zero_padding():
    s = CoefficientStream.from_values(list(range(1, 11)), CTX)
    K = hankel_matrix(s, 1, 3)
    # f_{n+m-1-i-j}: first row f_3, f_2, f_1; last row f_1, f_0, f_{-1} = 0
    assert [[int(v) for v in row] for row in K] == [[4, 3, 2], [3, 2, 1], [2, 1, 0]]


def test_two_by_two_hand_value():
    s = taylor_coeffs(CATALOG["two-pole"], 10, CTX)
    with CTX.scope():
        assert abs(hankel_det(s, 3, 2) - gmpy2.mpfr(1) / 7776) < gmpy2.mpfr("1e-70")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 12), st.integers(1, 4))
def test_det_matches_exact_rational_oracle(n, m):
    s = taylor_coeffs(CATALOG["two-pole"], 20, CTX)
    want = exact_hankel_det(exact_two_pole, n, m)
    got = hankel_det(s, n, m)
    with CTX.scope():
        w = gmpy2.mpfr(gmpy2.mpq(want.numerator, want.denominator))
        # two poles: rank 2, so orders above two vanish exactly in rationals
        if want == 0:
            assert abs(got) <= gmpy2.mpfr("1e-60") * abs(s[n]) ** m
        else:
            assert abs(got - w) <= gmpy2.mpfr("1e-60") * abs(w)


def test_big_hankel_det_is_shifted_order():
    s = taylor_coeffs(CATALOG["three-pole"], 30, CTX)
    assert big_hankel_det(s, 7, 2) == hankel_det(s, 8, 3)


def test_range_and_order_errors():
    s = taylor_coeffs(CATALOG["single-pole"], 5, CTX)
    with pytest.raises(CoefficientRangeError) as info:
        hankel_matrix(s, 5, 3)
    assert info.value.needed == 8
    with pytest.raises(DomainError):
        hankel_matrix(s, 1, 0)


def test_l_sequence_level_zero_is_one():
    s = taylor_coeffs(CATALOG["single-pole"], 20, CTX)
    assert all(v == 1 for _, v in l_sequence(s, 0, range(1, 10)))


def test_hadamard_two_pole_exp():
    s = taylor_coeffs(CATALOG["two-pole-exp"], 64, CTX)
    est = hadamard_radii(s, 2, range(8, 49))
    assert est[0].value == pytest.approx(2.0, rel=0.03)
    assert est[1].value == pytest.approx(3.0, rel=0.03)
    assert math.isinf(est[2].value) and est[2].infinite_reason == "super-geometric"
    assert est[0].method == "log-regression"


def test_hadamard_geometric_stops_at_zero_determinants():
    s = taylor_coeffs(CATALOG["geometric"], 64, CTX)
    est = hadamard_radii(s, 3, range(8, 49))
    assert est[0].value == pytest.approx(2.0, rel=1e-6)
    assert math.isinf(est[1].value) and est[1].infinite_reason == "zero-determinants"
    assert len(est) == 2


def test_hadamard_three_pole_and_double_pole():
    s = taylor_coeffs(CATALOG["three-pole"], 64, CTX)
    est = hadamard_radii(s, 3, range(8, 49))
    for e, want in zip(est, (1.5, 2.0, 2.5)):
        assert e.value == pytest.approx(want, rel=0.01)
    assert math.isinf(est[3].value)
    d = taylor_coeffs(CATALOG["double-pole-exp"], 64, CTX)
    est = hadamard_radii(d, 2, range(8, 49))
    assert [round(float(e.value), 1) for e in est[:2]] == [2.0, 2.9]


def test_hadamard_needs_a_window_of_points():
    s = taylor_coeffs(CATALOG["single-pole"], 40, CTX)
    with pytest.raises(DomainError):
        hadamard_radii(s, 1, range(8, 12))


@pytest.mark.parametrize("R", [0.5, 1.25, 2.0])
def test_scaling_identity(R):
    s = taylor_coeffs(CATALOG["two-pole-exp"], 40, CTX)
    # deep determinants cancel heavily, so a few dozen bits of 256 are lost
    for n, m in [(0, 0), (5, 1), (20, 3), (30, 2)]:
        assert verify_scaling_identity(s, R, n, m) <= gmpy2.mpfr("1e-40")
    with pytest.raises(DomainError):
        verify_scaling_identity(s, -1.0, 3, 1)
