"""Exterior conformal maps and the Faber reduction to the disc.

For a continuum E with exterior map Phi (Phi(inf) = inf, |Phi| = 1 on the
boundary) and inverse Psi, a function f analytic on E splits on circles
|w| = r > 1 as f(Psi(w)) = g(w) + h(w): g = sum a_n w^n collects the Faber
coefficients and h is analytic outside |w| = r0 with h(inf) = 0. Rational
and meromorphic approximation of f near E transfers to g on the disc, so
every walsh experiment runs unchanged on the stream of a_n.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from . import walsh
from .aak import TRUNCATION_CAP
from .errors import DomainError, NumericError
from .numkernel import PrecisionContext, big, big_param, fft
from .rates import fmt
from .series import CoefficientStream, MeromorphyProfile, scale_series, taylor_coeffs

_NEWTON_ITERS = 200


@dataclass(frozen=True)
class ExteriorMap:
    """Catalog exterior map.

    kinds: ``disc`` (Psi(w) = radius w), ``interval`` (Psi(w) = (w + 1/w)/2),
    ``ellipse`` (Psi(w) = (rho0 w + 1/(rho0 w))/2, rho0 > 1) and ``power``
    (Psi(w) = w + c w^(1-p)). ``r0`` is the radius outside which Psi is
    univalent and ``capacity`` the leading coefficient of Psi at infinity.
    """

    kind: str
    radius: float = 1.0
    rho0: float = 1.0
    c: complex = 0.0
    p: int = 2
    r0: float = 0.0
    capacity: float = 1.0

    @classmethod
    def disc(cls, radius=1.0):
        if not radius > 0:
            raise DomainError("disc radius must be positive")
        return cls("disc", radius=float(radius), r0=0.0, capacity=float(radius))

    @classmethod
    def interval(cls):
        # Psi' vanishes at w = +-1, so the univalence radius is the unit circle itself
        return cls("interval", r0=1.0, capacity=0.5)

    @classmethod
    def ellipse(cls, rho0):
        if not rho0 > 1:
            raise DomainError("ellipse parameter rho0 must exceed 1")
        return cls("ellipse", rho0=float(rho0), r0=1.0 / rho0, capacity=rho0 / 2.0)

    @classmethod
    def power(cls, c, p):
        p = int(p)
        if p < 2:
            raise DomainError("power map needs p >= 2")
        growth = abs(complex(c)) * (p - 1)
        if not growth < 1:
            raise DomainError(f"power map needs |c|(p-1) < 1 for univalence, got {growth}")
        return cls("power", c=complex(c), p=p, r0=growth ** (1.0 / p), capacity=1.0)

    def describe(self):
        if self.kind == "disc":
            return f"disc(radius={self.radius})"
        if self.kind == "ellipse":
            return f"ellipse(rho0={self.rho0})"
        if self.kind == "power":
            return f"power(c={self.c}, p={self.p})"
        return "interval[-1,1]"


MAP_CATALOG = {
    "disc": ExteriorMap.disc(1.0),
    "interval": ExteriorMap.interval(),
    "ellipse": ExteriorMap.ellipse(2.0),
    "power": ExteriorMap.power(0.25, 3),
}


def psi(emap, w):
    """Psi(w) at the active precision."""
    if emap.kind == "disc":
        return big_param(emap.radius) * w
    if emap.kind == "interval":
        return (w + 1 / w) / 2
    if emap.kind == "ellipse":
        u = big_param(emap.rho0) * w
        return (u + 1 / u) / 2
    c = big_param(emap.c)
    return w + c * w ** (1 - emap.p)


def _psi_prime(emap, w):
    if emap.kind == "disc":
        return big_param(emap.radius)
    if emap.kind == "interval":
        return (1 - 1 / (w * w)) / 2
    if emap.kind == "ellipse":
        r = big_param(emap.rho0)
        return (r - 1 / (r * w * w)) / 2
    c = big_param(emap.c)
    return 1 + c * (1 - emap.p) * w ** (-emap.p)


def _joukowski_inverse(z):
    z = gmpy2.mpc(z)
    root = gmpy2.sqrt(z * z - 1)
    a, b = z + root, z - root
    # keep the branch outside the unit circle; on the cut both have modulus 1
    return a if gmpy2.norm(a) >= gmpy2.norm(b) else b


def _phi(emap, z, ctx):
    tol = gmpy2.mul_2exp(gmpy2.mpfr(1), -(ctx.mantissa_bits // 2))
    if emap.kind == "disc":
        w = z / big_param(emap.radius)
    elif emap.kind == "interval":
        w = _joukowski_inverse(z)
    elif emap.kind == "ellipse":
        w = _joukowski_inverse(z) / big_param(emap.rho0)
    else:
        w = gmpy2.mpc(z)
        if w == 0:
            raise DomainError("z = 0 lies inside the power-map set")
        target_tol = gmpy2.mul_2exp(abs(w), 16 - ctx.mantissa_bits)
        for _ in range(_NEWTON_ITERS):
            step = (psi(emap, w) - z) / _psi_prime(emap, w)
            w = w - step
            if abs(step) <= target_tol:
                break
        else:
            raise NumericError(f"Newton inversion of Psi did not converge at z = {complex(z)}")
        if abs(w) <= emap.r0:
            raise DomainError(f"Newton landed inside the univalence radius at z = {complex(z)}")
    if abs(w) < 1 - tol:
        raise DomainError(f"z = {complex(z)} lies inside E (|Phi| = {float(abs(w)):.6g})")
    return w


def phi_of(emap, z, ctx=None):
    """Exterior map Phi(z) with |Phi(z)| >= 1."""
    ctx = ctx or PrecisionContext()
    with ctx.scope():
        return _phi(emap, big(z) if not isinstance(z, (type(gmpy2.mpfr(0)), type(gmpy2.mpc(0)))) else z, ctx)


def continuum_radii(spec, emap, m_max, ctx=None):
    """R_m relative to E: moduli |Phi(a)| of the poles, repeated by order."""
    ctx = ctx or PrecisionContext()
    slots = []
    with ctx.scope():
        for pole in spec.poles:
            w = _phi(emap, pole.location.to_big(), ctx)
            level = float(abs(w))
            if not level > 1:
                raise DomainError(f"pole at {pole.location.text()} lies on or inside E")
            slots.extend([level] * pole.order)
    slots.sort()
    return MeromorphyProfile(tuple(slots[k] if k < len(slots) else math.inf for k in range(m_max + 1)))


@dataclass(frozen=True)
class FaberReduction:
    """Faber coefficients a_0..a_N of f on E with the size of h.

    ``tail_norm`` is the largest modulus, over the sampling circle, of what
    remains after removing a_0..a_N, i.e. h plus the truncated tail of g.
    """

    g_stream: CoefficientStream
    r0: float
    tail_norm: object
    sampling_radius: float
    sample_count: int
    emap: ExteriorMap
    profile: MeromorphyProfile


def default_sampling_radius(R0):
    return (1.0 + R0) / 2.0 if math.isfinite(R0) else 2.0


def faber_coeffs(spec, emap, N, sampling_radius=None, ctx=None):
    """DFT extraction of a_n = (1/2 pi i) int f(Psi(w)) w^(-n-1) dw on |w| = r.

    The sample count is the smallest power of two >= 4(N+1). The attached
    aliasing bound F r^(-n) [(r/R0)^(M-n) + (r0/r)^(M-n)], with F the largest
    sample modulus, is a geometric estimate and flagged heuristic.
    """
    ctx = ctx or PrecisionContext()
    profile = continuum_radii(spec, emap, 0, ctx)
    R0 = profile[0]
    if emap.kind == "disc":
        # Psi(w) = radius * w, so g(w) = f(radius * w) in closed form and h = 0
        base = taylor_coeffs(spec, N, ctx)
        g = scale_series(base, emap.radius) if emap.radius != 1 else base
        g = CoefficientStream.from_values(list(g.coeffs), ctx, R0)
        with ctx.scope():
            zero = gmpy2.mpfr(0)
        return FaberReduction(g, emap.r0, zero, 1.0, 0, emap, profile)
    r = default_sampling_radius(R0) if sampling_radius is None else float(sampling_radius)
    if not 1 < r < R0:
        raise DomainError(f"sampling radius {r} must satisfy 1 < r < R_0 = {R0}")
    with ctx.scope():
        for pole in spec.poles:
            lvl = float(abs(_phi(emap, pole.location.to_big(), ctx)))
            if abs(lvl - r) <= 1e-12 * r:
                raise DomainError(f"sampling circle |w| = {r} passes through the image of a pole")
    M = 1
    while M < 4 * (N + 1):
        M *= 2
    with ctx.scope():
        rr = big_param(r)
        base_angle = 2 * gmpy2.const_pi() / M
        samples = []
        for j in range(M):
            w = rr * gmpy2.mpc(gmpy2.cos(base_angle * j), gmpy2.sin(base_angle * j))
            samples.append(spec.evaluate(psi(emap, w)))
        X = fft(samples, ctx)
        inv_r = 1 / rr
        coeffs = []
        scale = gmpy2.mpfr(1) / M
        for n in range(N + 1):
            coeffs.append(X[n] * scale)
            scale = scale * inv_r
        F = max(abs(v) for v in samples)
        bound = []
        for n in range(N + 1):
            term = F * inv_r**n
            outer = (rr / big_param(R0)) ** (M - n) if math.isfinite(R0) else gmpy2.mul_2exp(gmpy2.mpfr(1), -ctx.mantissa_bits)
            inner = (big_param(emap.r0) / rr) ** (M - n) if emap.r0 > 0 else gmpy2.mpfr(0)
            bound.append(term * (outer + inner))
        # residual on the circle after removing bins 0..N
        Y = np.array(X, dtype=object)
        Y[: N + 1] = gmpy2.mpc(0)
        resid = fft(Y, ctx, inverse=True)
        tail = max(abs(v) for v in resid) / M
    if _conjugation_symmetric(spec, emap):
        # f(Psi(conj w)) = conj f(Psi(w)), so the a_n are real up to roundoff
        coeffs = [v.real for v in coeffs]
    g = CoefficientStream.from_values(coeffs, ctx, R0, heuristic_flags=("aliasing-bound-heuristic",))
    object.__setattr__(g, "aliasing_bound", tuple(bound))
    return FaberReduction(g, emap.r0, tail, r, M, emap, profile)


def _conjugation_symmetric(spec, emap):
    if emap.kind == "power" and complex(emap.c).imag != 0:
        return False
    if any(c.im != 0 for c in spec.entire.coeffs):
        return False
    terms = {(p.location.re, p.location.im): p.coefficients for p in spec.poles}
    for (re, im), cs in terms.items():
        mirror = terms.get((re, -im))
        if mirror is None or any(a.re != b.re or a.im != -b.im for a, b in zip(cs, mirror)) or len(cs) != len(mirror):
            return False
    return True


def reduction_length(n_max):
    """Stream length that lets every adaptive truncation reach its cap."""
    return n_max + 2 * TRUNCATION_CAP + 2


def continuum_experiments(spec, emap, m, n_range, R_list, ctx=None, jobs=None, sampling_radius=None, reduction=None):
    """Products, scaled products and quotients for f on E, computed on g.

    Returns a dict with the reduction, the continuum profile and the
    reports keyed ``products``, ``scaled-products R=..`` and
    ``quotients R=..``.
    """
    ctx = ctx or PrecisionContext()
    ns = list(n_range)
    profile = continuum_radii(spec, emap, m, ctx)
    if reduction is None:
        reduction = faber_coeffs(spec, emap, reduction_length(ns[-1]), sampling_radius, ctx)
    g = reduction.g_stream
    out = {"reduction": reduction, "profile": profile}
    grid = walsh.walsh_grid(g, m, ns, ctx, jobs)
    out["products"] = walsh.superdiagonal_product_rate(grid, profile)
    for R in R_list:
        if R == 1:
            continue
        out[f"scaled-products R={R}"] = walsh.scaled_product_rate(g, R, m, ns, profile, ctx, jobs)
        out[f"quotients R={R}"] = walsh.quotient_rate(g, R, m, ns, ctx, profile=profile, jobs=jobs)
    return out


def level_curve(emap, R, sample_count, ctx=None):
    """Points Psi(R e^(i theta_j)) of the level curve |Phi| = R, theta_j = 2 pi j / count."""
    if not R > emap.r0:
        raise DomainError(f"R = {R} must exceed the univalence radius {emap.r0}")
    if sample_count < 1:
        raise DomainError("sample_count must be positive")
    ctx = ctx or PrecisionContext()
    with ctx.scope():
        rr = big_param(R)
        step = 2 * gmpy2.const_pi() / sample_count
        pts = []
        for j in range(sample_count):
            w = rr * gmpy2.mpc(gmpy2.cos(step * j), gmpy2.sin(step * j))
            pts.append((step * j, gmpy2.mpc(psi(emap, w))))
        return pts


def write_level_curve_csv(points, path, digits=20):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["theta", "re", "im"])
        for theta, z in points:
            out.writerow([fmt(theta, digits), fmt(z.real, digits), fmt(z.imag, digits)])
