"""Walsh-table experiments built on AAK errors.

Every rate statement is checked on Delta values, the AAK meromorphic
errors. The Walsh-table error rho_{n-m+k,k} itself is only bracketed:
Delta <= rho <= r/(1-r) * Delta', where Delta' is the AAK error of the same
symbol on the circle |z| = 1/r with 1/R_0 < r < 1. The constant does not
depend on n, so both sides decay at the same exponential rate.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import gmpy2

from . import aak, rates
from .errors import DegenerateError, DomainError
from .hankel import big_hankel_det
from .numkernel import big_param
from .series import scale_series

TWO_CIRCLE_TOLERANCE = 0.02


@dataclass(frozen=True)
class WalshCell:
    """Delta_{n-m+k,k} with the bracket [rho_lower, rho_upper] for rho_{n-m+k,k}.

    ``rho_upper`` is None unless the grid was built with brackets.
    """

    n: int
    k: int
    delta: object
    rho_lower: object
    rho_upper: object = None
    bracket_r: float | None = None
    bracket_constant: float | None = None


@dataclass(frozen=True)
class WalshGrid:
    stream: object
    m: int
    n_values: tuple
    spectra: dict
    cells: tuple

    def deltas(self, n):
        return self.spectra[n].values

    def product(self, n):
        p = gmpy2.mpfr(1)
        for v in self.spectra[n].values:
            p = p * v
        return p

    def products(self):
        with self.stream.ctx.scope():
            return [self.product(n) for n in self.n_values]


@dataclass
class RateReport:
    """Finite-n check of a limsup rate.

    ``estimate`` is the window maximum of ``values[i]^(1/n)`` over the last
    ``window`` entries and ``regression_estimate`` the exponential of the
    fitted slope of log|values| over the trailing half. In ``decay-only``
    mode the predicted rate is zero and ``target`` is 0 with no gap.
    """

    name: str
    target: object
    estimate: object
    relative_gap: object
    n_values: list
    values: list
    nth_roots: list
    regression_estimate: object = None
    mode: str = "rate"
    window: int = rates.WINDOW
    deltas: list = None
    extras: dict = field(default_factory=dict)

    @property
    def n_range(self):
        return self.n_values


def _rate_report(name, ns, values, target, ctx, mode="rate", deltas=None, extras=None, window=rates.WINDOW):
    with ctx.scope():
        roots = [rates.nth_root(v, n) for n, v in zip(ns, values)]
        estimate = rates.window_max(roots, window)
        logs = [rates.log_abs(v) for v in values]
        fit, _ = rates.trailing_regression(ns, logs, min(window, len(ns))) if len(ns) >= 2 else (None, None)
        reg = gmpy2.exp(fit[0]) if fit is not None else None
        tgt = None if target is None else gmpy2.mpfr(target)
        gap = rates.relative_gap(estimate, tgt) if mode == "rate" else None
        return RateReport(
            name=name,
            target=tgt,
            estimate=estimate,
            relative_gap=gap,
            n_values=list(ns),
            values=list(values),
            nth_roots=roots,
            regression_estimate=reg,
            mode=mode,
            window=window,
            deltas=deltas,
            extras=dict(extras or {}),
        )


def _check_n_range(n_range, m):
    ns = list(n_range)
    if not ns:
        raise DomainError("n_range is empty")
    if ns[0] < max(1, m):
        raise DomainError(f"n_range must start at n >= max(1, m) = {max(1, m)}")
    return ns


def _spectrum_task(args):
    s, n, m, bits = args
    from .numkernel import PrecisionContext

    return aak.aak_errors(s, n, m, PrecisionContext(bits))


def resolve_jobs(jobs=None):
    if jobs is None:
        env = os.environ.get("WALSH_LAB_JOBS")
        jobs = int(env) if env else 1
    return max(1, int(jobs))


def _spectra(s, m, ns, ctx, jobs):
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(ns) < 2:
        return {n: aak.aak_errors(s, n, m, ctx) for n in ns}
    tasks = [(s, n, m, ctx.mantissa_bits) for n in ns]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = list(pool.map(_spectrum_task, tasks))
    return dict(zip(ns, results))


def default_bracket_radius(R0):
    """r with 1/r = (1 + R0)/2, the midpoint between the unit circle and R0."""
    if not math.isfinite(R0):
        return 0.5
    return 2.0 / (1.0 + R0)


def walsh_grid(s, m, n_range, ctx=None, jobs=None, bracket=False, bracket_radius=None):
    """Cells (n, k), k = 0..m, all sharing one operator per n.

    With ``bracket=True`` each cell also gets rho_upper = r/(1-r) Delta' from
    the series scaled by 1/r (``bracket_radius`` r, default from the decay
    hint).
    """
    ctx = ctx or s.ctx
    ns = _check_n_range(n_range, m)
    spectra = _spectra(s, m, ns, ctx, jobs)
    upper = {}
    r = C = None
    if bracket:
        r = bracket_radius if bracket_radius is not None else default_bracket_radius(s.decay_radius_hint)
        if not (0 < r < 1 and 1 / r < s.decay_radius_hint):
            raise DomainError(f"bracket radius r = {r} needs 1/R0 < r < 1")
        C = r / (1 - r)
        g = scale_series(s, 1 / r)
        upper = _spectra(g, m, ns, ctx, jobs)
    cells = []
    with ctx.scope():
        for n in ns:
            for k, d in enumerate(spectra[n].values):
                hi = None
                if bracket:
                    hi = big_param(C) * upper[n].values[k]
                cells.append(WalshCell(n, k, d, d, hi, r, C))
    return WalshGrid(stream=s, m=m, n_values=tuple(ns), spectra=spectra, cells=tuple(cells))


def _degenerate_rows(grid, ctx):
    """Rows k whose last delta is below 2^(-bits/4) of s_0 at the same n."""
    with ctx.scope():
        thresh = gmpy2.mul_2exp(gmpy2.mpfr(1), -(ctx.mantissa_bits // 4))
        last = grid.deltas(grid.n_values[-1])
        return [k for k, v in enumerate(last) if v <= thresh * last[0] or v == 0]


def superdiagonal_product_rate(grid, profile, name="products"):
    """(prod_k Delta_{n-m+k,k})^(1/n) against 1/(R_0 ... R_m)."""
    s = grid.stream
    ctx = s.ctx
    m = grid.m
    radii = [profile[k] if k < len(profile) else math.inf for k in range(m + 1)]
    degenerate = _degenerate_rows(grid, ctx)
    mode = "rate"
    if any(math.isinf(x) for x in radii) or degenerate:
        mode = "decay-only"
    with ctx.scope():
        if mode == "rate":
            target = gmpy2.mpfr(1)
            for x in radii:
                target = target / big_param(x)
        else:
            target = gmpy2.mpfr(0)
        ns = list(grid.n_values)
        extras = {"m": m, "radii": radii, "degenerate_rows": degenerate}
        return _rate_report(
            name, ns, grid.products(), target, ctx, mode=mode, deltas=[grid.deltas(n) for n in ns], extras=extras
        )


def _require_scale(R, profile, low=1.0):
    R0 = profile[0]
    if not low <= R < R0:
        raise DomainError(f"R = {R} must satisfy {low} <= R < R_0 = {R0}")


def scaled_product_rate(s, R, m, n_range, profile, ctx=None, jobs=None):
    """Products on f(Rz), target R^(m+1)/(R_0 ... R_m)."""
    _require_scale(R, profile)
    g = scale_series(s, R)
    grid = walsh_grid(g, m, n_range, ctx, jobs)
    rep = superdiagonal_product_rate(grid, profile.scaled(R), name=f"scaled-products R={R}")
    rep.extras["R"] = R
    return rep


def _products(grid, ctx):
    with ctx.scope():
        return grid.products()


def quotient_rate(s, R, m, n_range, ctx=None, profile=None, jobs=None):
    """prod Delta(f) / prod Delta(f(R.)) against 1/R^(m+1); the ratio never exceeds 1."""
    ctx = ctx or s.ctx
    R0 = profile[0] if profile is not None else s.decay_radius_hint
    if R != 1 and not 1 < R < R0:
        raise DomainError(f"R = {R} must satisfy 1 < R < R_0 = {R0}")
    base = walsh_grid(s, m, n_range, ctx, jobs)
    scaled = walsh_grid(scale_series(s, R), m, n_range, ctx, jobs) if R != 1 else base
    num = _products(base, ctx)
    den = _products(scaled, ctx)
    if any(d == 0 for d in den):
        raise DegenerateError("scaled products vanish; the symbol is rational with at most m poles")
    degenerate = _degenerate_rows(base, ctx) or _degenerate_rows(scaled, ctx)
    with ctx.scope():
        vals = [a / b for a, b in zip(num, den)]
        target = 1 / big_param(R) ** (m + 1)
        ns = list(base.n_values)
        extras = {
            "m": m,
            "R": R,
            "max_quotient": max(vals),
            "quotient_le_one": all(v <= 1 for v in vals),
            "degenerate_rows": degenerate,
        }
        return _rate_report(
            f"quotients R={R}",
            ns,
            vals,
            target,
            ctx,
            mode="decay-only" if degenerate else "rate",
            deltas=[base.deltas(n) for n in ns],
            extras=extras,
        )


def hankel_quotient_rate(s, R, m, n_range, ctx=None, profile=None, jobs=None):
    """|det K(n+1, m+1)| / prod Delta(f(R.)) against 1/R^(m+1)."""
    ctx = ctx or s.ctx
    R0 = profile[0] if profile is not None else s.decay_radius_hint
    if not 1 <= R < R0:
        raise DomainError(f"R = {R} must satisfy 1 <= R < R_0 = {R0}")
    ns = _check_n_range(n_range, m)
    with ctx.scope():
        dets = [abs(big_hankel_det(s, n, m, ctx)) for n in ns]
    if all(d == 0 for d in dets):
        raise DegenerateError("Hankel determinants vanish on the whole range; the symbol is rational")
    grid = walsh_grid(scale_series(s, R) if R != 1 else s, m, ns, ctx, jobs)
    den = _products(grid, ctx)
    with ctx.scope():
        vals = [d / p if p != 0 else gmpy2.mpfr(0) for d, p in zip(dets, den)]
        target = 1 / big_param(R) ** (m + 1)
        return _rate_report(
            f"hankel-quotient R={R}",
            ns,
            vals,
            target,
            ctx,
            deltas=[grid.deltas(n) for n in ns],
            extras={"m": m, "R": R, "determinants": dets},
        )


def two_circle_comparison(s, r, rho, m, n_range, ctx=None, profile=None, jobs=None, tolerance=TWO_CIRCLE_TOLERANCE):
    """Products on two circles of the exterior picture, |z| = r and |z| = rho.

    On the Taylor side the circles become the discs of radius 1/r and 1/rho,
    so the ratio prod Delta(f(z/r)) / prod Delta(f(z/rho)) decays at most like
    (rho/r)^(n(m+1)). The check compares the fitted slope of log(ratio) in n
    with (m+1) log(rho/r) plus ``tolerance``.
    """
    ctx = ctx or s.ctx
    R0 = profile[0] if profile is not None else s.decay_radius_hint
    if not (1 / R0 < rho <= r <= 1):
        raise DomainError(f"radii must satisfy 1/R_0 < rho <= r <= 1, got r={r}, rho={rho}")
    near = walsh_grid(scale_series(s, 1 / r) if r != 1 else s, m, n_range, ctx, jobs)
    far = near if rho == r else walsh_grid(scale_series(s, 1 / rho), m, n_range, ctx, jobs)
    num = _products(near, ctx)
    den = _products(far, ctx)
    if any(d == 0 for d in den):
        raise DegenerateError("products on the outer circle vanish")
    with ctx.scope():
        ns = list(near.n_values)
        vals = [a / b for a, b in zip(num, den)]
        logs = [rates.log_abs(v) for v in vals]
        fit, win = rates.trailing_regression(ns, logs, min(rates.WINDOW, len(ns))) if len(ns) >= 2 else (None, None)
        slope = fit[0] if fit is not None else gmpy2.mpfr(0)
        ratio = big_param(rho) / big_param(r)
        bound = (m + 1) * gmpy2.log(ratio)
        extras = {
            "m": m,
            "r": r,
            "rho": rho,
            "slope": slope,
            "bound": bound,
            "deviation": abs(slope - bound),
            "tolerance": tolerance,
            "holds": bool(slope <= bound + tolerance),
        }
        return _rate_report(
            f"two-circle r={r} rho={rho}",
            ns,
            vals,
            ratio ** (m + 1),
            ctx,
            deltas=[near.deltas(n) for n in ns],
            extras=extras,
        )


@dataclass
class SubsequenceResult:
    """Lambda and the per-row and partial-product reports along it.

    ``rows`` maps (R, k) to the report for Delta_{n-m+k,k}^(1/n) and
    ``partials`` maps (R, k) to the report for the product over rows 0..k.
    ``base`` is the full-sequence product report on the unscaled series.
    """

    Lambda: list
    rows: dict
    partials: dict
    base: RateReport
    diagnostic: str = ""


def find_common_subsequence(s, m, n_range, epsilon, profile, R_list, ctx=None, jobs=None):
    """Indices where the level-m product is within epsilon of its limsup estimate.

    Lambda = {n : P_n^(1/n) >= (1 - epsilon) * W}, with W the window maximum
    over the trailing window, which always contains its own maximizer, so
    Lambda is never empty. Along Lambda each row k and each partial product
    is compared with R/R_k and R^(k+1)/(R_0 ... R_k) for every R in R_list.
    """
    ctx = ctx or s.ctx
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not profile.finite_through(m):
        raise DomainError(f"profile must be finite through R_{m}")
    ns = _check_n_range(n_range, m)
    base_grid = walsh_grid(s, m, ns, ctx, jobs)
    base = superdiagonal_product_rate(base_grid, profile, name="subsequence base")
    with ctx.scope():
        threshold = (1 - big_param(epsilon)) * base.estimate
        Lambda = [n for n, root in zip(ns, base.nth_roots) if root >= threshold]
        diagnostic = ""
        if not Lambda:
            # unreachable with the trailing-window policy; kept as a guard
            Lambda = [ns[max(range(len(ns)), key=lambda i: base.nth_roots[i])]]
            diagnostic = "threshold selected nothing; kept the maximizing index"
    base.extras["in_lambda"] = [n in Lambda for n in ns]
    rows, partials = {}, {}
    for R in R_list:
        if R != 1:
            _require_scale(R, profile)
        grid = base_grid if R == 1 else walsh_grid(scale_series(s, R), m, ns, ctx, jobs)
        with ctx.scope():
            RR = big_param(R)
            for k in range(m + 1):
                row_vals = [grid.deltas(n)[k] for n in Lambda]
                part_vals = []
                for n in Lambda:
                    p = gmpy2.mpfr(1)
                    for v in grid.deltas(n)[: k + 1]:
                        p = p * v
                    part_vals.append(p)
                row_target = RR / big_param(profile[k])
                part_target = RR ** (k + 1)
                for j in range(k + 1):
                    part_target = part_target / big_param(profile[j])
                full_row = [grid.deltas(n)[k] for n in ns]
                rows[(R, k)] = _rate_report(
                    f"row k={k} R={R}",
                    Lambda,
                    row_vals,
                    row_target,
                    ctx,
                    extras={"R": R, "k": k, "full_sequence": _rate_report("", ns, full_row, row_target, ctx)},
                )
                partials[(R, k)] = _rate_report(
                    f"partial k={k} R={R}", Lambda, part_vals, part_target, ctx, extras={"R": R, "k": k}
                )
    return SubsequenceResult(Lambda=Lambda, rows=rows, partials=partials, base=base, diagnostic=diagnostic)
