"""Arbitrary-precision scalar and dense-matrix kernel.

Scalars are ``gmpy2.mpfr`` (real) or ``gmpy2.mpc`` (complex) values and
matrices are two-dimensional numpy arrays of ``dtype=object`` holding them.
Every public routine takes a :class:`PrecisionContext` and runs inside its
scope, so the working precision never leaks from one caller to another.
Real inputs stay in ``mpfr`` throughout, which roughly halves the cost of
every inner loop compared with carrying zero imaginary parts.
"""

from __future__ import annotations

import functools
import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
import numpy as np

from .errors import ConvergenceError, DimensionError, NumericError

MATRIX_CAP = 2048
DEFAULT_BITS = 384
DEFAULT_SWEEPS = 64

_MPFR = type(gmpy2.mpfr(0))
_MPC = type(gmpy2.mpc(0))
_GMPY_ERRORS = (gmpy2.OverflowResultError, gmpy2.InvalidOperationError)


@dataclass(frozen=True)
class PrecisionContext:
    """Binary working precision, rounding to nearest with ties to even."""

    mantissa_bits: int = DEFAULT_BITS
    round_mode: str = "nearest-even"

    def __post_init__(self):
        if not isinstance(self.mantissa_bits, int) or self.mantissa_bits < 64:
            raise ValueError("mantissa_bits must be an integer >= 64")
        if self.round_mode != "nearest-even":
            raise ValueError("only nearest-even rounding is supported")

    @contextmanager
    def scope(self):
        """Activate this precision in gmpy2, trapping overflow and NaN."""
        ctx = gmpy2.context(
            gmpy2.get_context(),
            precision=self.mantissa_bits,
            real_prec=self.mantissa_bits,
            imag_prec=self.mantissa_bits,
            round=gmpy2.RoundToNearest,
            trap_overflow=True,
            trap_invalid=True,
            allow_complex=False,
        )
        try:
            with ctx:
                yield self
        except _GMPY_ERRORS as exc:
            raise NumericError(f"arithmetic fault at {self.mantissa_bits} bits: {exc}") from exc

    def eps(self, shift=0):
        """Return 2^(shift - mantissa_bits) as mpfr."""
        with self.scope():
            return gmpy2.mul_2exp(gmpy2.mpfr(1), shift - self.mantissa_bits)


def _parse_text(text):
    t = text.strip().replace(" ", "").replace("i", "j")
    if "j" not in t:
        return gmpy2.mpfr(t)
    re_s, im_s = complex_text_parts(t)
    return gmpy2.mpc(gmpy2.mpfr(re_s), gmpy2.mpfr(im_s))


def complex_text_parts(t):
    """Split ``'a+bj'`` style text into an ``(re, im)`` pair of strings."""
    t = t.strip().replace(" ", "").replace("i", "j").strip("()")
    if not t.endswith("j"):
        return (t, "0")
    body = t[:-1]
    # find the sign that separates real and imaginary parts, skipping exponents
    for pos in range(len(body) - 1, 0, -1):
        if body[pos] in "+-" and body[pos - 1] not in "eE":
            re_part, im_part = body[:pos], body[pos:]
            break
    else:
        re_part, im_part = "0", body
    if im_part in ("", "+"):
        im_part = "1"
    elif im_part == "-":
        im_part = "-1"
    return (re_part, im_part)


def big(x):
    """Convert a number (int, float, Fraction, complex, str, gmpy2) to mpfr or mpc.

    Must be called inside a precision scope. Values with a zero imaginary
    part come back as mpfr.
    """
    if isinstance(x, _MPC):
        if x.imag == 0:
            return gmpy2.mpfr(x.real)
        return gmpy2.mpc(x)
    if isinstance(x, (_MPFR, int)):
        return gmpy2.mpfr(x)
    if isinstance(x, Fraction):
        return gmpy2.mpfr(gmpy2.mpq(x.numerator, x.denominator))
    if isinstance(x, float):
        return gmpy2.mpfr(x)
    if isinstance(x, complex):
        return gmpy2.mpfr(x.real) if x.imag == 0 else gmpy2.mpc(x)
    if isinstance(x, str):
        return _parse_text(x)
    if hasattr(x, "numerator") and hasattr(x, "denominator"):
        return gmpy2.mpfr(gmpy2.mpq(int(x.numerator), int(x.denominator)))
    raise TypeError(f"cannot convert {type(x).__name__} to an arbitrary-precision scalar")


def big_param(x):
    """Like :func:`big`, but floats are read through their shortest decimal
    form, so a user parameter such as 1.25 is exact at every precision."""
    if isinstance(x, float) and math.isfinite(x):
        return big(Fraction(repr(x)))
    return big(x)


def is_real(x):
    return not isinstance(x, _MPC)


def abs2(x):
    """Squared modulus without a square root."""
    if isinstance(x, _MPC):
        return gmpy2.norm(x)
    return x * x


_abs2_vec = np.frompyfunc(abs2, 1, 1)
_abs_vec = np.frompyfunc(abs, 1, 1)
_big_vec = np.frompyfunc(big, 1, 1)


def as_matrix(rows, ctx):
    """Build an object matrix from nested sequences, converting every entry."""
    with ctx.scope():
        a = np.array(rows, dtype=object)
        if a.ndim != 2:
            raise DimensionError("matrix input must be two-dimensional")
        _check_cap(a)
        return _big_vec(a).astype(object)


def to_numpy(M):
    """Lossy conversion to a complex128 array, for comparisons and plots."""
    out = np.empty(M.shape, dtype=complex)
    for idx, v in np.ndenumerate(M):
        out[idx] = complex(v)
    return out


def _check_cap(M):
    if M.size == 0:
        raise DimensionError("matrix must be non-empty")
    if max(M.shape) > MATRIX_CAP:
        raise DimensionError(f"matrix dimension {max(M.shape)} exceeds cap {MATRIX_CAP}")


def _all_real(M):
    return all(not isinstance(v, _MPC) for v in M.flat)


def _zero_like(real):
    return gmpy2.mpfr(0) if real else gmpy2.mpc(0)


def frobenius(M, ctx):
    with ctx.scope():
        return gmpy2.sqrt(_abs2_vec(np.asarray(M, dtype=object)).sum())


def lu_det(M, ctx):
    """Determinant by LU factorization with partial pivoting.

    A pivot column whose largest entry is below 2^(16-bits) times the
    largest matrix entry is taken as dependent and an exact zero is
    returned. This separates structural rank deficiency from roundoff.
    """
    M = np.asarray(M, dtype=object)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"determinant needs a square matrix, got shape {M.shape}")
    _check_cap(M)
    with ctx.scope():
        real = _all_real(M)
        A = M.copy()
        n = A.shape[0]
        scale = max(_abs_vec(A).flat)
        if scale == 0:
            return _zero_like(real)
        thresh = gmpy2.mul_2exp(scale, 16 - ctx.mantissa_bits)
        det = gmpy2.mpfr(1) if real else gmpy2.mpc(1)
        for k in range(n):
            mags = _abs_vec(A[k:, k])
            p = int(np.argmax(mags))
            if mags[p] < thresh:
                return _zero_like(real)
            if p:
                A[[k, k + p]] = A[[k + p, k]]
                det = -det
            pivot = A[k, k]
            det *= pivot
            if k + 1 < n:
                factors = A[k + 1:, k] / pivot
                A[k + 1:, k + 1:] -= np.multiply.outer(factors, A[k, k + 1:])
        return det


def _normalize_phase(V):
    """Scale each column so its largest-magnitude entry is positive real."""
    for j in range(V.shape[1]):
        col = V[:, j]
        mags = _abs2_vec(col)
        p = int(np.argmax(mags))
        if mags[p] == 0:
            continue
        lead = col[p]
        if isinstance(lead, _MPC):
            V[:, j] = col * (lead.conjugate() / abs(lead))
        elif lead < 0:
            V[:, j] = -col


def jacobi_svd(M, ctx, tol=None, max_sweeps=DEFAULT_SWEEPS):
    """One-sided (Hestenes) Jacobi singular value decomposition.

    Returns ``(values, V)`` with values descending and the columns of ``V``
    the matching right singular vectors. Column pairs are rotated until the
    cosine of every pair angle is below ``tol`` (default 2^(32-bits)).
    Columns whose norm falls below 2^(8-bits) times the Frobenius norm are
    treated as zero, so rank-deficient input converges and reports exact
    zero singular values.
    """
    M = np.asarray(M, dtype=object)
    if M.ndim != 2:
        raise DimensionError("jacobi_svd needs a matrix")
    rows, cols = M.shape
    if rows < cols:
        raise DimensionError(f"jacobi_svd needs rows >= cols, got {M.shape}")
    _check_cap(M)
    with ctx.scope():
        tol = gmpy2.mul_2exp(gmpy2.mpfr(1), 32 - ctx.mantissa_bits) if tol is None else gmpy2.mpfr(tol)
        if tol <= 0:
            raise ValueError("tol must be positive")
        real = _all_real(M)
        one = gmpy2.mpfr(1)
        zero = _zero_like(real)
        # column-major copies make each rotation two vector updates
        A = [M[:, j].copy() for j in range(cols)]
        V = [np.array([one if i == j else zero for i in range(cols)], dtype=object) for j in range(cols)]
        norms = [_abs2_vec(a).sum() for a in A]
        # columns at roundoff level carry no direction and would rotate forever
        negligible = gmpy2.mul_2exp(gmpy2.mpfr(1), 2 * (8 - ctx.mantissa_bits)) * sum(norms)
        residual = gmpy2.mpfr(0)
        for _sweep in range(max_sweeps):
            residual = gmpy2.mpfr(0)
            for p in range(cols - 1):
                for q in range(p + 1, cols):
                    alpha, beta = norms[p], norms[q]
                    if alpha <= negligible or beta <= negligible:
                        continue
                    ap, aq = A[p], A[q]
                    gamma = np.dot(ap, aq) if real else np.dot(np.conjugate(ap), aq)
                    g = abs(gamma)
                    if g == 0:
                        continue
                    cosine = g / gmpy2.sqrt(alpha * beta)
                    if cosine > residual:
                        residual = cosine
                    if cosine <= tol:
                        continue
                    zeta = (beta - alpha) / (2 * g)
                    t = one / (abs(zeta) + gmpy2.sqrt(one + zeta * zeta))
                    if zeta < 0:
                        t = -t
                    c = one / gmpy2.sqrt(one + t * t)
                    s = c * t
                    phase = gamma / g
                    bq = aq * phase.conjugate() if not real else aq * phase
                    vq = V[q] * phase.conjugate() if not real else V[q] * phase
                    A[p] = c * ap - s * bq
                    A[q] = s * ap + c * bq
                    vp = V[p]
                    V[p] = c * vp - s * vq
                    V[q] = s * vp + c * vq
                    norms[p] = _abs2_vec(A[p]).sum()
                    norms[q] = _abs2_vec(A[q]).sum()
            if residual <= tol:
                break
        else:
            raise ConvergenceError(
                f"Jacobi SVD did not converge in {max_sweeps} sweeps (residual {float(residual):.3e})",
                residual=residual,
            )
        values = [gmpy2.sqrt(v) if v > negligible else gmpy2.mpfr(0) for v in norms]
        order = sorted(range(cols), key=lambda j: (-values[j], j))
        values = [values[j] for j in order]
        Vm = np.empty((cols, cols), dtype=object)
        for out_j, j in enumerate(order):
            Vm[:, out_j] = V[j]
        _normalize_phase(Vm)
        return values, Vm


def dominant_singular_values(M, count, ctx, tol=None):
    """Leading ``count`` singular values, the prefix of :func:`jacobi_svd`."""
    M = np.asarray(M, dtype=object)
    if M.ndim != 2 or not 1 <= count <= M.shape[1]:
        raise DimensionError(f"count must lie in 1..cols, got {count} for shape {M.shape}")
    values, _ = jacobi_svd(M, ctx, tol=tol)
    return values[:count]


@dataclass(frozen=True)
class TruncatedSVD:
    """Leading singular triplets of a matrix reduced by pivoted QR.

    ``residual`` is the Frobenius norm of the discarded trailing block, so
    each true singular value lies in ``[values[k], values[k] + residual]``.
    """

    values: list
    right_vectors: np.ndarray
    residual: object
    rank: int


def _householder(x, real):
    """Reflector (v, beta) mapping x onto a multiple of e_0; None for x = 0."""
    nx2 = _abs2_vec(x).sum()
    if nx2 == 0:
        return None, None
    nx = gmpy2.sqrt(nx2)
    x0 = x[0]
    if x0 == 0:
        alpha = -nx
    else:
        alpha = -(x0 / abs(x0)) * nx
    v = x.copy()
    v[0] = x0 - alpha
    vn2 = _abs2_vec(v).sum()
    if vn2 == 0:
        return None, None
    return v, 2 / vn2


def _apply_reflector(v, beta, B, real):
    # B <- (I - beta v v^H) B, in place on a view
    w = v @ B if real else np.conjugate(v) @ B
    B -= np.multiply.outer(v * beta, w)


def truncated_svd(M, count, ctx, tol=None):
    """Leading ``count`` singular values and right vectors of a tall or square matrix.

    Column-pivoted Householder QR is run until the trailing block is
    negligible, then the short upper trapezoid is compressed by a second QR
    and finished with :func:`jacobi_svd`. The discarded block norm is
    returned as a certified perturbation bound.
    """
    M = np.asarray(M, dtype=object)
    rows, cols = M.shape
    if not 1 <= count <= min(rows, cols):
        raise DimensionError(f"count must lie in 1..{min(rows, cols)}, got {count}")
    _check_cap(M)
    with ctx.scope():
        bits = ctx.mantissa_bits
        real = _all_real(M)
        A = M.copy()
        perm = np.arange(cols)
        norms2 = list(_abs2_vec(A).sum(axis=0))
        ref2 = list(norms2)
        recompute_drop = gmpy2.mul_2exp(gmpy2.mpfr(1), -(bits // 2))
        half = gmpy2.mul_2exp(gmpy2.mpfr(1), -(bits // 2))
        floor = gmpy2.mul_2exp(gmpy2.mpfr(1), 16 - bits)
        r00 = None
        k = 0
        limit = min(rows, cols)
        trailing = gmpy2.sqrt(sum(norms2))
        while k < limit:
            trailing = gmpy2.sqrt(sum(norms2[k:]))
            if trailing == 0:
                break
            if k >= count:
                rmm = abs(A[count - 1, count - 1])
                if trailing <= half * rmm + floor * r00:
                    break
            p = k + int(np.argmax(norms2[k:]))
            if p != k:
                A[:, [k, p]] = A[:, [p, k]]
                perm[[k, p]] = perm[[p, k]]
                norms2[k], norms2[p] = norms2[p], norms2[k]
                ref2[k], ref2[p] = ref2[p], ref2[k]
            v, beta = _householder(A[k:, k], real)
            if v is not None:
                _apply_reflector(v, beta, A[k:, k:], real)
            if r00 is None:
                r00 = abs(A[0, 0])
            for j in range(k + 1, cols):
                norms2[j] = norms2[j] - abs2(A[k, j])
                if norms2[j] <= ref2[j] * recompute_drop or norms2[j] < 0:
                    norms2[j] = _abs2_vec(A[k + 1:, j]).sum()
                    ref2[j] = norms2[j]
            norms2[k] = gmpy2.mpfr(0)
            k += 1
        else:
            trailing = gmpy2.mpfr(0)
        rank = max(k, count)
        top = A[:rank, :].copy()
        for i in range(1, rank):
            top[i, :i] = _zero_like(real)
        # compress the rank x cols trapezoid: top^H = Q3 [R3; 0]
        B = np.conjugate(top.T).copy() if not real else top.T.copy()
        reflectors = []
        for j in range(rank):
            v, beta = _householder(B[j:, j], real)
            reflectors.append((v, beta))
            if v is not None:
                _apply_reflector(v, beta, B[j:, j:], real)
        R3 = B[:rank, :rank].copy()
        for i in range(1, rank):
            R3[i, :i] = _zero_like(real)
        R3h = np.conjugate(R3.T).copy() if not real else R3.T.copy()
        values, Vs = jacobi_svd(R3h, ctx)
        W = np.empty((cols, count), dtype=object)
        zero = _zero_like(real)
        for c in range(count):
            w = np.array([zero] * cols, dtype=object)
            w[:rank] = Vs[:, c]
            for j in range(rank - 1, -1, -1):
                v, beta = reflectors[j]
                if v is None:
                    continue
                tail = w[j:]
                coef = (v @ tail if real else np.conjugate(v) @ tail) * beta
                w[j:] = tail - v * coef
            out = np.empty(cols, dtype=object)
            out[perm] = w
            W[:, c] = out
        _normalize_phase(W)
        return TruncatedSVD(values=values[:count], right_vectors=W, residual=trailing, rank=rank)


@functools.lru_cache(maxsize=32)
def _twiddles(n, bits, inverse):
    ctx = PrecisionContext(bits)
    with ctx.scope():
        sign = 1 if inverse else -1
        base = 2 * gmpy2.const_pi() / n
        out = np.empty(n // 2, dtype=object)
        for k in range(n // 2):
            ang = base * k
            out[k] = gmpy2.mpc(gmpy2.cos(ang), sign * gmpy2.sin(ang))
        out.flags.writeable = False
        return out


def fft(values, ctx, inverse=False):
    """Radix-2 discrete Fourier transform, X_k = sum_j x_j exp(-2 pi i jk/n).

    The inverse flag flips the sign of the exponent without the 1/n factor.
    """
    x = np.asarray(values, dtype=object)
    n = x.shape[0]
    if n < 1 or n & (n - 1):
        raise DimensionError(f"FFT length must be a power of two, got {n}")
    with ctx.scope():
        a = _big_vec(x).astype(object)
        bits = n.bit_length() - 1
        rev = np.zeros(n, dtype=np.int64)
        for b in range(bits):
            rev |= ((np.arange(n) >> b) & 1) << (bits - 1 - b)
        a = a[rev]
        tw = _twiddles(n, ctx.mantissa_bits, inverse)
        size = 2
        while size <= n:
            half = size // 2
            w = tw[:: n // size][:half]
            blocks = a.reshape(-1, size)
            even = blocks[:, :half]
            odd = blocks[:, half:] * w
            a = np.concatenate([even + odd, even - odd], axis=1).reshape(-1)
            size *= 2
        return a
