"""Singular values of weighted Hankel operators as meromorphic approximation errors.

For a stream f and weight l the operator has matrix entries f_{l+i+j+1},
i, j >= 0. Its singular values s_0 >= s_1 >= ... are the errors
Delta_{l+k,k} of best approximation on the unit circle by functions with at
most k poles in the disc, so for a superdiagonal index pair (n, m) one
operator with l = n - m yields Delta_{n-m+k,k} for every k <= m.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .errors import CoefficientRangeError, DomainError
from .hankel import big_hankel_det
from .numkernel import PrecisionContext, abs2, truncated_svd

TRUNCATION_START = 128
TRUNCATION_CAP = 1024
TAIL_RATIO = 1e-10
_EXTRAPOLATION_BASE = 8


@dataclass(frozen=True)
class WeightedHankelSpec:
    l: int
    N: int

    def __post_init__(self):
        if self.l < 0:
            raise DomainError("weight exponent l must be nonnegative")


@dataclass(frozen=True)
class AakSpectrum:
    """Top m+1 singular values of the operator truncated to N x N.

    ``tail_bound`` is the Hilbert-Schmidt norm of the discarded entries,
    computed from the explicit coefficients plus ``tail_extrapolated``, a
    geometric continuation past the end of the stream (heuristic).
    ``reduction_residual`` is the certified error of the QR truncation
    inside the SVD. Each true s_k lies within ``error_bound`` of
    ``values[k]``.
    """

    l: int
    m: int
    values: tuple
    tail_bound: object
    right_vectors: np.ndarray
    N: int
    tail_extrapolated: object = 0
    reduction_residual: object = 0
    converged: bool = True
    heuristic_flags: tuple = field(default=())

    @property
    def error_bound(self):
        return self.tail_bound + self.reduction_residual


def build_weighted_hankel(s, l, N):
    """N x N matrix with entry (i, j) = f_{l+i+j+1}."""
    if l < 0 or N < 1:
        raise DomainError("need l >= 0 and N >= 1")
    top = l + 2 * N - 1
    if top >= len(s):
        raise CoefficientRangeError(
            f"weighted Hankel (l={l}, N={N}) needs f_0..f_{top}, stream has {len(s)}", needed=top + 1
        )
    i = np.arange(N)
    return s.coeffs[l + 1 + i[:, None] + i[None, :]]


def hilbert_schmidt_tail(s, l, N):
    """(explicit, extrapolated) Hilbert-Schmidt norm of entries outside the N x N block.

    Anti-diagonal i+j = k holds f_{l+1+k}; the number of its cells that fall
    outside the block is (k+1) - max(0, 2N-1-k).
    """
    ctx = s.ctx
    with ctx.scope():
        total = gmpy2.mpfr(0)
        last = len(s) - 1 - (l + 1)
        for k in range(N, last + 1):
            cnt = (k + 1) - max(0, 2 * N - 1 - k)
            total += cnt * abs2(s.coeffs[l + 1 + k])
        explicit = gmpy2.sqrt(total)
        hint = s.decay_radius_hint
        lo = max(l + 1, len(s) - _EXTRAPOLATION_BASE)
        base2 = max((abs2(v) for v in s.coeffs[lo:]), default=gmpy2.mpfr(0))
        if base2 == 0 or math.isinf(hint):
            extrap = gmpy2.mpfr(0)
        elif hint <= 1:
            extrap = gmpy2.inf()
        else:
            x = 1 / gmpy2.mpfr(hint) ** 2
            K = max(last, N - 1)
            extrap = gmpy2.sqrt(base2 * ((K + 1) * x / (1 - x) + x / (1 - x) ** 2))
        return explicit, extrap


_cache = OrderedDict()
_cache_lock = threading.Lock()
_CACHE_SIZE = 1024


def clear_cache():
    with _cache_lock:
        _cache.clear()


def aak_errors(s, n, m, ctx=None, truncation=None):
    """Delta_{n-m+k,k} = s_k for k = 0..m from the operator with l = n - m.

    The truncation starts at N = 128 and doubles up to 1024 until the tail
    bound is at most 1e-10 of the current s_m estimate. The estimate is
    floored at 2^(-bits/2) s_0 so a numerically zero s_m (finite-rank symbol)
    does not force the cap. A fixed ``truncation`` skips the adaptation.
    """
    if not n >= m >= 0:
        raise DomainError(f"need n >= m >= 0, got n={n}, m={m}")
    ctx = ctx or s.ctx
    l = n - m
    key = (s.fingerprint, s.decay_radius_hint, l, m, truncation, ctx.mantissa_bits)
    with _cache_lock:
        hit = _cache.get(key)
        if hit is not None:
            _cache.move_to_end(key)
            return hit
    spec = _compute(s, l, m, ctx, truncation)
    with _cache_lock:
        _cache[key] = spec
        while len(_cache) > _CACHE_SIZE:
            _cache.popitem(last=False)
    return spec


def _compute(s, l, m, ctx, truncation):
    with ctx.scope():
        floor_scale = gmpy2.mul_2exp(gmpy2.mpfr(1), -(ctx.mantissa_bits // 2))
        N = truncation if truncation is not None else max(TRUNCATION_START, m + 2)
        while True:
            H = build_weighted_hankel(s, l, N)
            svd = truncated_svd(H, m + 1, ctx)
            explicit, extrap = hilbert_schmidt_tail(s, l, N)
            tail = explicit + extrap
            sm = max(svd.values[m], floor_scale * svd.values[0])
            done = tail <= TAIL_RATIO * sm or tail == 0
            if truncation is not None or done or N * 2 > TRUNCATION_CAP:
                break
            N *= 2
        flags = ("tail-extrapolation-heuristic",) if extrap > 0 else ()
        return AakSpectrum(
            l=l,
            m=m,
            values=tuple(svd.values),
            tail_bound=tail,
            right_vectors=svd.right_vectors,
            N=N,
            tail_extrapolated=extrap,
            reduction_residual=svd.residual,
            converged=bool(done),
            heuristic_flags=flags,
        )


@dataclass(frozen=True)
class DetProductCheck:
    """|det K(n+1, m+1)| against the product of the top m+1 singular values.

    Unpacks as ``(det, product, holds)``; ``bound`` is the product with
    each factor raised by the spectrum's error bound.
    """

    det: object
    product: object
    holds: bool
    bound: object
    n: int
    m: int

    def __iter__(self):
        return iter((self.det, self.product, self.holds))


def det_vs_product_check(s, n, m, ctx=None):
    ctx = ctx or s.ctx
    spec = aak_errors(s, n, m, ctx)
    with ctx.scope():
        det = abs(big_hankel_det(s, n, m, ctx))
        product = gmpy2.mpfr(1)
        bound = gmpy2.mpfr(1)
        for v in spec.values:
            product *= v
            bound *= v + spec.error_bound
        holds = det <= bound + gmpy2.mpfr("1e-20") * product
        return DetProductCheck(det=det, product=product, holds=bool(holds), bound=bound, n=n, m=m)


def bilinear_orthogonality_check(H, spectrum, ctx=None):
    """Largest defect of |v_i^T H v_j| = s_j delta_ij, relative to s_0."""
    ctx = ctx or PrecisionContext(spectrum.values[0].precision)
    with ctx.scope():
        return _bilinear(H, spectrum)


def _bilinear(H, spectrum):
    V = spectrum.right_vectors
    H = np.asarray(H, dtype=object)
    if H.shape[1] != V.shape[0]:
        raise DomainError(f"operator size {H.shape} does not match vectors {V.shape}")
    vals = spectrum.values
    k = len(vals)
    G = V.T @ (H @ V[:, :k])
    scale = max(vals[0], gmpy2.mpfr("1e-300"))
    worst = gmpy2.mpfr(0)
    for i in range(k):
        for j in range(k):
            if i == j:
                d = abs(abs(G[i, i]) - vals[i])
            else:
                d = abs(G[i, j])
            if d > worst:
                worst = d
    return worst / scale
