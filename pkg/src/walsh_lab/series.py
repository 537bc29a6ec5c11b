"""Test-function catalog, Taylor coefficient streams and disc scaling.

Pole terms follow the convention ``c / (a - z)**p``, whose Taylor
coefficients are ``c * binom(k+p-1, p-1) * a**(-k-p)``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import gmpy2
import numpy as np

from .errors import DimensionError, DomainError
from .numkernel import PrecisionContext, big, big_param, complex_text_parts, fft

INF = math.inf
_MPFR = type(gmpy2.mpfr(0))


@dataclass(frozen=True)
class Scalar:
    """Exact complex number with rational parts, independent of precision."""

    re: Fraction
    im: Fraction = Fraction(0)

    @classmethod
    def parse(cls, value):
        if isinstance(value, Scalar):
            return value
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return cls(Fraction(str(value[0])), Fraction(str(value[1])))
        if isinstance(value, complex):
            return cls(Fraction(value.real), Fraction(value.imag))
        if isinstance(value, (int, Fraction)):
            return cls(Fraction(value))
        if isinstance(value, float):
            return cls(Fraction(str(value)))
        if isinstance(value, str):
            re_s, im_s = complex_text_parts(value)
            return cls(Fraction(re_s), Fraction(im_s))
        raise TypeError(f"cannot read a complex number from {value!r}")

    def to_big(self):
        """mpfr/mpc at the active precision."""
        re = gmpy2.mpfr(gmpy2.mpq(self.re.numerator, self.re.denominator))
        if self.im == 0:
            return re
        return gmpy2.mpc(re, gmpy2.mpq(self.im.numerator, self.im.denominator))

    def modulus(self):
        return math.hypot(float(self.re), float(self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def text(self):
        """Round-trippable text form."""
        if self.im == 0:
            return str(self.re)
        return f"{self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}j"


@dataclass(frozen=True)
class Pole:
    """Principal part sum_j c_j / (a - z)**j, j = 1..order."""

    location: Scalar
    coefficients: tuple

    @property
    def order(self):
        return len(self.coefficients)

    @classmethod
    def simple(cls, location, c=1):
        return cls(Scalar.parse(location), (Scalar.parse(c),))


@dataclass(frozen=True)
class EntirePart:
    kind: str = "none"
    coeffs: tuple = ()

    KINDS = ("none", "exp", "cos", "polynomial")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown entire part {self.kind!r}")


@dataclass(frozen=True)
class FunctionSpec:
    """Meromorphic test function: finitely many poles plus an entire part."""

    poles: tuple = ()
    entire: EntirePart = field(default_factory=EntirePart)
    name: str = ""

    def __post_init__(self):
        seen = set()
        for pole in self.poles:
            if pole.order < 1:
                raise DomainError("pole order must be positive")
            if pole.coefficients[-1].re == 0 and pole.coefficients[-1].im == 0:
                raise DomainError(f"leading coefficient of the pole at {pole.location.text()} is zero")
            key = (pole.location.re, pole.location.im)
            if key in seen:
                raise DomainError(f"duplicate pole location {pole.location.text()}")
            seen.add(key)

    def is_rational(self):
        return self.entire.kind in ("none", "polynomial")

    def evaluate(self, z):
        """f(z) at the active precision for an mpfr/mpc argument."""
        total = gmpy2.mpfr(0)
        for pole in self.poles:
            a = pole.location.to_big()
            d = a - z
            if d == 0:
                raise DomainError("evaluation point coincides with a pole")
            inv = 1 / d
            acc = inv
            for c in pole.coefficients:
                total = total + c.to_big() * acc
                acc = acc * inv
        kind = self.entire.kind
        if kind == "exp":
            total = total + gmpy2.exp(z)
        elif kind == "cos":
            total = total + gmpy2.cos(z)
        elif kind == "polynomial":
            acc = gmpy2.mpfr(0)
            for c in reversed(self.entire.coeffs):
                acc = acc * z + c.to_big()
            total = total + acc
        return total


@dataclass(frozen=True)
class MeromorphyProfile:
    """Nondecreasing radii R_0 <= R_1 <= ..., with math.inf past the last pole."""

    radii: tuple

    def __post_init__(self):
        r = self.radii
        if any(b < a for a, b in zip(r, r[1:])):
            raise DomainError("meromorphy radii must be nondecreasing")
        if r and not r[0] > 1:
            raise DomainError("R_0 must exceed 1")

    def __getitem__(self, k):
        return self.radii[k]

    def __len__(self):
        return len(self.radii)

    def finite_through(self, m):
        return len(self.radii) > m and all(math.isfinite(x) for x in self.radii[: m + 1])

    def scaled(self, R):
        """Radii relative to the disc of radius R, i.e. R_k / R (needs R < R_0)."""
        if not R < self.radii[0]:
            raise DomainError(f"scale {R} must be below R_0 = {self.radii[0]}")
        return MeromorphyProfile(tuple(x / R for x in self.radii))


@dataclass(frozen=True, eq=False)
class CoefficientStream:
    """Finite prefix f_0..f_N of a power series; f_k = 0 for k < 0.

    ``coeffs`` is a read-only object array of mpfr (all real) or mpc
    entries. ``aliasing_bound`` is set for streams recovered from samples
    and is a heuristic estimate.
    """

    coeffs: np.ndarray
    ctx: PrecisionContext
    decay_radius_hint: float = INF
    aliasing_bound: object = None
    heuristic_flags: tuple = ()
    f0: object = None

    @classmethod
    def from_values(cls, values, ctx, decay_radius_hint=INF, **kw):
        with ctx.scope():
            arr = np.empty(len(values), dtype=object)
            for i, v in enumerate(values):
                arr[i] = big(v)
            if not all(isinstance(v, _MPFR) for v in arr):
                for i, v in enumerate(arr):
                    arr[i] = gmpy2.mpc(v)
        if len(arr) < 1:
            raise DimensionError("a coefficient stream needs at least one coefficient")
        arr.flags.writeable = False
        return cls(coeffs=arr, ctx=ctx, decay_radius_hint=decay_radius_hint, f0=arr[0], **kw)

    def __len__(self):
        return len(self.coeffs)

    @property
    def N(self):
        return len(self.coeffs) - 1

    @cached_property
    def is_real(self):
        return all(isinstance(v, _MPFR) for v in self.coeffs)

    @cached_property
    def fingerprint(self):
        h = hashlib.sha256()
        h.update(str(self.ctx.mantissa_bits).encode())
        for v in self.coeffs:
            h.update(gmpy2.to_binary(v))
        return h.hexdigest()

    def coeff(self, k):
        if k < 0:
            return gmpy2.mpfr(0)
        return self.coeffs[k]

    def __getitem__(self, k):
        return self.coeff(k)

    def prefix(self, length):
        return CoefficientStream.from_values(
            list(self.coeffs[:length]), self.ctx, self.decay_radius_hint, heuristic_flags=self.heuristic_flags
        )


def derive_profile(spec, m_max):
    """Ground-truth radii: pole moduli repeated by order, then infinity."""
    slots = []
    for pole in spec.poles:
        slots.extend([pole.location.modulus()] * pole.order)
    slots.sort()
    radii = tuple(slots[k] if k < len(slots) else INF for k in range(m_max + 1))
    return MeromorphyProfile(radii)


def _require_disc_poles(spec):
    for pole in spec.poles:
        if pole.location.re**2 + pole.location.im**2 <= 1:
            raise DomainError(f"pole at {pole.location.text()} lies in the closed unit disc")


def taylor_coeffs(spec, N, ctx):
    """Closed-form Taylor coefficients f_0..f_N of ``spec`` at the origin."""
    if N < 0:
        raise DimensionError("N must be nonnegative")
    _require_disc_poles(spec)
    with ctx.scope():
        total = [gmpy2.mpfr(0)] * (N + 1)
        for pole in spec.poles:
            a = pole.location.to_big()
            inv_a = 1 / a
            for j, cj in enumerate(pole.coefficients, start=1):
                c = cj.to_big()
                # c * binom(k+j-1, j-1) * a^(-k-j), built by recurrence in k
                term = c * inv_a**j
                for k in range(N + 1):
                    total[k] = total[k] + term
                    term = term * inv_a * (k + j) / (k + 1)
        kind = spec.entire.kind
        if kind == "exp":
            term = gmpy2.mpfr(1)
            for k in range(N + 1):
                total[k] = total[k] + term
                term = term / (k + 1)
        elif kind == "cos":
            term = gmpy2.mpfr(1)
            for k in range(0, N + 1, 2):
                total[k] = total[k] + term
                term = -term / ((k + 1) * (k + 2))
        elif kind == "polynomial":
            for k, c in enumerate(spec.entire.coeffs[: N + 1]):
                total[k] = total[k] + c.to_big()
        hint = derive_profile(spec, 0)[0]
        return CoefficientStream.from_values(total, ctx, decay_radius_hint=hint)


def coeffs_from_samples(samples, r=1.0, ctx=None, decay_radius_hint=INF, count=None):
    """Taylor coefficients from values of f on M equispaced points of |z| = r.

    Point j is r*exp(2 pi i j/M). Returns a stream of length ``count``
    (default M/2) with f_k = r^(-k) DFT_k / M. The attached aliasing bound
    max|f| * r^(-k) * (r/R0)^(M-k) is a geometric estimate from the decay
    hint, so it is flagged heuristic; sampling at r >= R0 additionally
    raises the ``radius-beyond-decay`` flag.
    """
    vals = list(samples)
    M = len(vals)
    if M < 2 or M & (M - 1):
        raise DimensionError(f"sample count must be a power of two >= 2, got {M}")
    count = M // 2 if count is None else count
    if not 1 <= count <= M // 2:
        raise DimensionError(f"can recover at most {M // 2} coefficients from {M} samples")
    ctx = ctx or PrecisionContext()
    flags = ["aliasing-bound-heuristic"]
    if r >= decay_radius_hint:
        flags.append("radius-beyond-decay")
    with ctx.scope():
        X = fft(vals, ctx)
        rr = gmpy2.mpfr(r)
        inv_r = 1 / rr
        out = []
        scale = gmpy2.mpfr(1) / M
        for k in range(count):
            out.append(X[k] * scale)
            scale = scale * inv_r
        fmax = max(abs(big(v)) for v in vals)
        if not math.isfinite(decay_radius_hint):
            # entire: the geometric estimate vanishes, so fall back to the precision floor
            floor = gmpy2.mul_2exp(fmax, 8 - ctx.mantissa_bits)
            bound = [floor * inv_r**k for k in range(count)]
        elif r < decay_radius_hint:
            q = rr / gmpy2.mpfr(decay_radius_hint)
            bound = [fmax * inv_r**k * q ** (M - k) for k in range(count)]
        else:
            bound = [gmpy2.inf()] * count
    s = CoefficientStream.from_values(out, ctx, decay_radius_hint, heuristic_flags=tuple(flags))
    object.__setattr__(s, "aliasing_bound", tuple(bound))
    return s


def read_samples_csv(path, ctx):
    """Read sample-ingestion CSV (header ``index,re,im``) into a value list ordered by index."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["index", "re", "im"]:
            raise DomainError(f"{path}: header must be index,re,im")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DomainError(f"{path}: line {lineno} needs three fields")
            rows.append((int(row[0]), row[1].strip(), row[2].strip()))
    rows.sort()
    if [i for i, _, _ in rows] != list(range(len(rows))):
        raise DomainError(f"{path}: indices must run 0..M-1 without gaps")
    with ctx.scope():
        return [gmpy2.mpc(gmpy2.mpfr(re), gmpy2.mpfr(im)) if gmpy2.mpfr(im) != 0 else gmpy2.mpfr(re) for _, re, im in rows]


def sample_on_circle(spec, r, M, ctx):
    """Values of ``spec`` at r*exp(2 pi i j/M), j = 0..M-1."""
    with ctx.scope():
        base = 2 * gmpy2.const_pi() / M
        rr = gmpy2.mpfr(r)
        return [spec.evaluate(rr * gmpy2.mpc(gmpy2.cos(base * j), gmpy2.sin(base * j))) for j in range(M)]


def scale_series(s, R):
    """Coefficients of g(z) = f(Rz): g_j = f_j R^j."""
    if not R > 0:
        raise DomainError("scale factor must be positive")
    ctx = s.ctx
    with ctx.scope():
        RR = big_param(R)
        out = []
        p = gmpy2.mpfr(1)
        for v in s.coeffs:
            out.append(v * p)
            p = p * RR
    hint = s.decay_radius_hint / float(RR) if math.isfinite(s.decay_radius_hint) else INF
    return CoefficientStream.from_values(out, ctx, hint, heuristic_flags=s.heuristic_flags)


def _spec(name, poles=(), entire="none", coeffs=()):
    return FunctionSpec(
        poles=tuple(Pole(Scalar.parse(a), tuple(Scalar.parse(c) for c in cs)) for a, cs in poles),
        entire=EntirePart(entire, tuple(Scalar.parse(c) for c in coeffs)),
        name=name,
    )


CATALOG = {
    "geometric": _spec("geometric", [("2", ["2"])]),
    "single-pole": _spec("single-pole", [("2", ["1"])]),
    "two-pole": _spec("two-pole", [("2", ["1"]), ("3", ["1"])]),
    "two-pole-exp": _spec("two-pole-exp", [("2", ["1"]), ("3", ["1"])], "exp"),
    "three-pole": _spec("three-pole", [("1.5", ["1"]), ("2", ["1"]), ("2.5", ["1"])], "exp"),
    "double-pole-exp": _spec("double-pole-exp", [("2", ["1"]), ("3", ["0", "1"])], "exp"),
    "complex-pair": _spec("complex-pair", [("0.9+1.5j", ["1"]), ("0.9-1.5j", ["1"]), ("-2.5", ["1"])]),
    "exp": _spec("exp", entire="exp"),
    "cos": _spec("cos", entire="cos"),
    "chebyshev-t2": _spec("chebyshev-t2", entire="polynomial", coeffs=["-2", "0", "4"]),
}

CATALOG_NOTES = {
    "geometric": "2/(2-z), rank-one Hankel structure",
    "single-pole": "1/(2-z)",
    "two-pole": "1/(2-z) + 1/(3-z)",
    "two-pole-exp": "1/(2-z) + 1/(3-z) + exp(z)",
    "three-pole": "1/(1.5-z) + 1/(2-z) + 1/(2.5-z) + exp(z)",
    "double-pole-exp": "1/(2-z) + 1/(3-z)^2 + exp(z)",
    "complex-pair": "conjugate poles at 0.9+-1.5i and a real pole at -2.5",
    "exp": "exp(z), entire",
    "cos": "cos(z), entire",
    "chebyshev-t2": "4z^2 - 2 = 2*T_2(z)",
}
