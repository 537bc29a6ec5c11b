"""Hankel matrices of coefficient streams and the Hadamard radius estimator.

``K(n, m)`` is the m x m matrix with entry (i, j) = f_{n+m-1-i-j}: its first
row is f_{n+m-1}, ..., f_n and its last row f_n, ..., f_{n-m+1}, where
coefficients with negative index are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from . import rates
from .errors import CoefficientRangeError, DomainError
from .numkernel import big_param, lu_det
from .series import scale_series

INFINITE_SLOPE_DROP = 0.25


@dataclass(frozen=True)
class HankelMatrixView:
    stream: object
    n: int
    m: int

    def matrix(self):
        return hankel_matrix(self.stream, self.n, self.m)


def hankel_matrix(s, n, m):
    if m < 1:
        raise DomainError("Hankel order m must be at least 1")
    top = n + m - 1
    if top >= len(s):
        raise CoefficientRangeError(f"K({n},{m}) needs f_0..f_{top}, stream has {len(s)}", needed=top + 1)
    idx = top - np.arange(m)[:, None] - np.arange(m)[None, :]
    zero = gmpy2.mpfr(0) if s.is_real else gmpy2.mpc(0)
    out = np.empty((m, m), dtype=object)
    for (i, j), k in np.ndenumerate(idx):
        out[i, j] = s.coeffs[k] if k >= 0 else zero
    return out


def hankel_det(s, n, m, ctx=None):
    """det K(n, m); K(n, 1) = [f_n]."""
    return lu_det(hankel_matrix(s, n, m), ctx or s.ctx)


def big_hankel_det(s, n, m, ctx=None):
    """det of the (m+1) x (m+1) matrix with entries f_{n+m+1-i-j}, i.e. K(n+1, m+1)."""
    return hankel_det(s, n + 1, m + 1, ctx)


def l_sequence(s, m, n_range, ctx=None):
    """Pairs (n, |det K(n, m)|^(1/n)); level m = 0 is identically 1."""
    ctx = ctx or s.ctx
    out = []
    with ctx.scope():
        for n in n_range:
            if m == 0:
                out.append((n, gmpy2.mpfr(1)))
            else:
                out.append((n, rates.nth_root(hankel_det(s, n, m, ctx), n)))
    return out


@dataclass(frozen=True)
class RadiusEstimate:
    """Estimate of R_m = l_m / l_{m+1}.

    ``value`` comes from ``method``; both the window-max and regression
    estimates are kept. ``infinite_reason`` explains an infinite value:
    ``zero-determinants``, ``threshold`` or ``super-geometric``.
    """

    m: int
    value: float
    window: range
    method: str
    residual: float
    window_max_value: float
    regression_value: float
    infinite_reason: str | None = None


class _Level:
    """log|det K(n, m)| over the grid with both rate estimates."""

    def __init__(self, s, m, ns, ctx, window):
        self.m = m
        if m == 0:
            self.logs = [gmpy2.mpfr(0)] * len(ns)
        else:
            self.logs = [rates.log_abs(hankel_det(s, n, m, ctx)) for n in ns]
        self.all_zero = m > 0 and all(not gmpy2.is_finite(v) for v in self.logs)
        roots = [gmpy2.exp(y / n) if gmpy2.is_finite(y) else gmpy2.mpfr(0) for n, y in zip(ns, self.logs)]
        self.window_max = rates.window_max(roots, window)
        fit, self.window = rates.trailing_regression(ns, self.logs, window)
        if fit is None:
            self.slope, self.rms = None, gmpy2.mpfr(0)
            self.regression = gmpy2.mpfr(0)
        else:
            self.slope, _, self.rms = fit
            self.regression = gmpy2.exp(self.slope)
        # slope over the leading half, for the super-geometric test
        half = len(ns) // 2
        early = rates.regression(ns[:half], self.logs[:half]) if half >= 2 else None
        self.early_slope = early[0] if early else None

    def super_geometric(self):
        if self.slope is None or self.early_slope is None:
            return False
        return self.early_slope - self.slope > INFINITE_SLOPE_DROP


def hadamard_radii(s, m_max, n_range, ctx=None, window=rates.WINDOW):
    """Estimate R_0..R_{m_max} from Hankel determinant growth.

    ``value`` is the ratio of regression estimates of l_m and l_{m+1}. The
    window-max ratio is kept alongside. R_m is declared infinite when every
    determinant at level m+1 vanishes (then estimation stops), when the
    level-(m+1) window maximum is below 2^(-bits/4), or when the decay of
    log|det| steepens by more than 0.25 per step between the two halves of
    the range (super-geometric decay of an entire remainder).
    """
    ctx = ctx or s.ctx
    ns = list(n_range)
    if len(ns) < window:
        raise DomainError(f"n_range needs at least {window} points, got {len(ns)}")
    out = []
    with ctx.scope():
        thresh = gmpy2.mul_2exp(gmpy2.mpfr(1), -(ctx.mantissa_bits // 4))
        lower = _Level(s, 0, ns, ctx, window)
        for m in range(m_max + 1):
            upper = _Level(s, m + 1, ns, ctx, window)
            reason = None
            if upper.all_zero:
                reason = "zero-determinants"
            elif upper.window_max < thresh:
                reason = "threshold"
            elif upper.super_geometric():
                reason = "super-geometric"
            if reason is not None:
                wm = reg = math.inf
            else:
                wm = float(lower.window_max / upper.window_max)
                reg = float(lower.regression / upper.regression) if upper.regression > 0 else math.inf
            out.append(
                RadiusEstimate(
                    m=m,
                    value=reg,
                    window=upper.window,
                    method="log-regression",
                    residual=float(upper.rms),
                    window_max_value=wm,
                    regression_value=reg,
                    infinite_reason=reason,
                )
            )
            if reason is not None:
                break
            lower = upper
    return out


def verify_scaling_identity(s, R, n, m, ctx=None):
    """Relative defect of det K(n+1, m+1)(f(R.)) = R^((m+1)(n+1)) det K(n+1, m+1)(f)."""
    ctx = ctx or s.ctx
    if not R > 0:
        raise DomainError("R must be positive")
    g = scale_series(s, R)
    with ctx.scope():
        lhs = big_hankel_det(g, n, m, ctx)
        factor = big_param(R) ** ((m + 1) * (n + 1))
        rhs = factor * big_hankel_det(s, n, m, ctx)
        denom = max(abs(lhs), abs(rhs))
        if denom == 0:
            return gmpy2.mpfr(0)
        return abs(lhs - rhs) / denom

