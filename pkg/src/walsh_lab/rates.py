"""Finite-n rate extraction shared by the hankel and walsh modules.

A limsup of ``|x_n|^(1/n)`` is estimated two ways: the maximum of the last
``WINDOW`` nth roots, and the exponential of the least-squares slope of
``log|x_n|`` against n over the trailing half of the range. The window
maximum keeps limsup semantics but carries the O(log C / n) bias of the
constant in ``x_n ~ C q^n``; the slope removes that constant.
"""

from __future__ import annotations

import math

import gmpy2

WINDOW = 8


def log_abs(v):
    """log|v| as mpfr, or -inf for an exact zero."""
    a = abs(v)
    if a == 0:
        return gmpy2.mpfr("-inf")
    return gmpy2.log(a)


def nth_root(v, n):
    if n <= 0:
        raise ValueError("nth root needs n >= 1")
    a = abs(v)
    if a == 0:
        return gmpy2.mpfr(0)
    return gmpy2.exp(gmpy2.log(a) / n)


def window_max(values, window=WINDOW):
    tail = list(values)[-window:]
    return max(tail) if tail else None


def regression(ns, logs):
    """Least-squares line through the finite (n, log) pairs.

    Returns ``(slope, intercept, rms)`` or None when fewer than two finite
    points are present.
    """
    pts = [(gmpy2.mpfr(n), y) for n, y in zip(ns, logs) if gmpy2.is_finite(y)]
    if len(pts) < 2:
        return None
    k = len(pts)
    mx = sum(x for x, _ in pts) / k
    my = sum(y for _, y in pts) / k
    sxx = sum((x - mx) ** 2 for x, _ in pts)
    sxy = sum((x - mx) * (y - my) for x, y in pts)
    slope = sxy / sxx
    icpt = my - slope * mx
    rms = gmpy2.sqrt(sum((y - icpt - slope * x) ** 2 for x, y in pts) / k)
    return slope, icpt, rms


def trailing_half(ns, min_points=WINDOW):
    """Index slice covering the trailing half of ``ns`` with at least ``min_points`` entries."""
    count = max(min_points, (len(ns) + 1) // 2)
    return slice(max(0, len(ns) - count), len(ns))


def trailing_regression(ns, logs, min_points=WINDOW):
    sl = trailing_half(ns, min_points)
    return regression(ns[sl], logs[sl]), range(ns[sl][0], ns[sl][-1] + 1) if ns[sl] else None


def relative_gap(estimate, target):
    if target is None or not math.isfinite(float(target)) or target == 0:
        return None
    return abs(estimate - target) / abs(target)


def fmt(x, digits=20):
    """Scientific-notation decimal string with ``digits`` significant digits.

    mpfr values are printed from their own binary expansion so no digits are
    lost to an intermediate float.
    """
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    v = x if isinstance(x, type(gmpy2.mpfr(0))) else None
    if v is None:
        if isinstance(x, float):
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            if math.isnan(x):
                return "nan"
        v = gmpy2.mpfr(x, max(64, 4 * digits))
    if gmpy2.is_infinite(v):
        return "inf" if v > 0 else "-inf"
    if gmpy2.is_nan(v):
        return "nan"
    if v == 0:
        return "0." + "0" * (digits - 1) + "e+00" if digits > 1 else "0e+00"
    mant, exp, _ = v.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    e = exp - 1
    body = mant[0] + ("." + mant[1:] if digits > 1 else "")
    return f"{sign}{body}e{'+' if e >= 0 else '-'}{abs(e):02d}"
