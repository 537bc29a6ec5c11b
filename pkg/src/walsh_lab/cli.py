"""Config-driven experiment runner: ``walsh-lab run|validate|catalog``.

Exit codes: 0 ok, 2 configuration error, 3 domain error, 4 numeric error,
5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import gmpy2

from . import aak, faber, hankel, walsh
from .errors import ConfigError, DomainError, NumericError, WalshLabError
from .numkernel import PrecisionContext
from . import rates
from .rates import fmt
from .series import CATALOG, CATALOG_NOTES, EntirePart, FunctionSpec, Pole, Scalar, derive_profile, taylor_coeffs

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5

EXPERIMENTS = ("radii", "products", "quotients", "hankel-quotient", "two-circle", "subsequence", "faber")
INVARIANTS = ("det-product", "quotient-le-one", "scaling-identity", "orthogonality", "round-trip", "bracket", "row-order")
FORMATS = ("csv", "json", "svg")
SET_KINDS = ("disc", "interval", "ellipse", "power")
TOP_KEYS = (
    "function", "set", "precision_bits", "n_range", "m", "R_list", "epsilon",
    "experiments", "invariants", "two_circle", "output", "tolerances",
)  # fmt: skip
DEFAULT_TOLERANCES = {"rate": 0.05, "two_circle": walsh.TWO_CIRCLE_TOLERANCE, "orthogonality": 1e-15}


@dataclass(frozen=True)
class SetSpec:
    kind: str = "disc"
    radius: float = 1.0
    rho0: float = 2.0
    c: float = 0.25
    p: int = 3
    sampling_radius: float | None = None

    def exterior_map(self):
        if self.kind == "disc":
            return faber.ExteriorMap.disc(self.radius)
        if self.kind == "interval":
            return faber.ExteriorMap.interval()
        if self.kind == "ellipse":
            return faber.ExteriorMap.ellipse(self.rho0)
        return faber.ExteriorMap.power(self.c, self.p)


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "walsh_lab_out"
    formats: tuple = FORMATS
    digits: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    function: FunctionSpec
    set: SetSpec = field(default_factory=SetSpec)
    precision_bits: int = 384
    n_range: tuple = (8, 48, 1)
    m: int = 1
    R_list: tuple = (1.0,)
    epsilon: float = 0.02
    experiments: tuple = ()
    invariants: tuple = ()
    two_circle: tuple | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    tolerances: tuple = ()

    def ns(self):
        start, stop, step = self.n_range
        return list(range(start, stop + 1, step))

    def tolerance(self, key):
        return dict(self.tolerances).get(key, DEFAULT_TOLERANCES[key])

    def to_dict(self):
        """Plain structure that :func:`config_from_dict` maps back to an equal config."""
        fn = self.function
        d = {
            "function": {
                "name": fn.name,
                "entire": fn.entire.kind,
                "entire_coeffs": [c.text() for c in fn.entire.coeffs],
                "poles": [
                    {"location": p.location.text(), "coefficients": [c.text() for c in p.coefficients]} for p in fn.poles
                ],
            },
            "set": {k: _num_text(v) for k, v in vars(self.set).items() if v is not None},
            "precision_bits": self.precision_bits,
            "n_range": {"start": self.n_range[0], "stop": self.n_range[1], "step": self.n_range[2]},
            "m": self.m,
            "R_list": [_num_text(R) for R in self.R_list],
            "epsilon": _num_text(self.epsilon),
            "experiments": list(self.experiments),
            "invariants": list(self.invariants),
            "output": {"dir": self.output.dir, "formats": list(self.output.formats), "digits": self.output.digits},
        }
        if self.two_circle is not None:
            d["two_circle"] = {"r": _num_text(self.two_circle[0]), "rho": _num_text(self.two_circle[1])}
        if self.tolerances:
            d["tolerances"] = {k: _num_text(v) for k, v in self.tolerances}
        return d


def _num_text(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _line_of(source, key):
    if not source:
        return None
    pat = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*[=:]", re.M)
    m = pat.search(source)
    return source.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    """Typed field access that raises ConfigError with field and line."""

    def __init__(self, source):
        self.source = source

    def fail(self, field_name, message):
        raise ConfigError(message, field=field_name, line=_line_of(self.source, field_name.split(".")[-1].split("[")[0]))

    def number(self, value, field_name, integer=False):
        if isinstance(value, bool):
            self.fail(field_name, "expected a number")
        if integer:
            if isinstance(value, int):
                return value
            if isinstance(value, str) and re.fullmatch(r"[+-]?\d+", value.strip()):
                return int(value)
            self.fail(field_name, "expected an integer")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(Fraction(value.strip()))
            except (ValueError, ZeroDivisionError):
                pass
        self.fail(field_name, f"expected a number, got {value!r}")

    def scalar(self, value, field_name):
        try:
            return Scalar.parse(value)
        except (TypeError, ValueError, ZeroDivisionError):
            self.fail(field_name, f"cannot read a complex number from {value!r}")


def _parse_function(raw, rd):
    if not isinstance(raw, dict):
        rd.fail("function", "must be a table")
    if "catalog" in raw:
        name = raw["catalog"]
        if name not in CATALOG:
            rd.fail("function.catalog", f"unknown catalog spec {name!r}; see `walsh-lab catalog`")
        extra = set(raw) - {"catalog"}
        if extra:
            rd.fail("function", f"catalog reference cannot be combined with {sorted(extra)}")
        return CATALOG[name]
    known = {"name", "entire", "entire_coeffs", "poles"}
    for k in raw:
        if k not in known:
            rd.fail(f"function.{k}", "unknown key")
    poles = []
    for i, p in enumerate(raw.get("poles", [])):
        where = f"function.poles[{i}]"
        if not isinstance(p, dict) or "location" not in p:
            rd.fail(where, "each pole needs a location")
        coeffs = p.get("coefficients", ["1"])
        if not isinstance(coeffs, list) or not coeffs:
            rd.fail(f"{where}.coefficients", "must be a non-empty list")
        order = p.get("order", len(coeffs))
        if order != len(coeffs):
            rd.fail(f"{where}.order", f"order {order} does not match {len(coeffs)} coefficients")
        poles.append(Pole(rd.scalar(p["location"], f"{where}.location"), tuple(rd.scalar(c, f"{where}.coefficients") for c in coeffs)))
    kind = raw.get("entire", "none")
    if kind not in EntirePart.KINDS:
        rd.fail("function.entire", f"must be one of {EntirePart.KINDS}")
    ecoeffs = tuple(rd.scalar(c, "function.entire_coeffs") for c in raw.get("entire_coeffs", []))
    try:
        return FunctionSpec(tuple(poles), EntirePart(kind, ecoeffs), str(raw.get("name", "")))
    except DomainError as exc:
        rd.fail("function.poles", str(exc))


def config_from_dict(raw, source=""):
    """Validate a parsed config structure (TOML or JSON) into an ExperimentConfig."""
    rd = _Reader(source)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a table")
    for k in raw:
        if k not in TOP_KEYS:
            rd.fail(k, "unknown key")
    if "function" not in raw:
        rd.fail("function", "missing required section")
    fn = _parse_function(raw["function"], rd)
    sraw = raw.get("set", {})
    if not isinstance(sraw, dict):
        rd.fail("set", "must be a table")
    kind = sraw.get("kind", "disc")
    if kind not in SET_KINDS:
        rd.fail("set.kind", f"must be one of {SET_KINDS}")
    for k in sraw:
        if k not in ("kind", "radius", "rho0", "c", "p", "sampling_radius"):
            rd.fail(f"set.{k}", "unknown key")
    sset = SetSpec(
        kind=kind,
        radius=rd.number(sraw.get("radius", 1.0), "set.radius"),
        rho0=rd.number(sraw.get("rho0", 2.0), "set.rho0"),
        c=rd.number(sraw.get("c", 0.25), "set.c"),
        p=rd.number(sraw.get("p", 3), "set.p", integer=True),
        sampling_radius=None if sraw.get("sampling_radius") is None else rd.number(sraw["sampling_radius"], "set.sampling_radius"),
    )
    try:
        sset.exterior_map()
    except DomainError as exc:
        rd.fail("set", str(exc))
    bits = rd.number(raw.get("precision_bits", 384), "precision_bits", integer=True)
    if bits < 64:
        rd.fail("precision_bits", "must be at least 64")
    nr = raw.get("n_range", {})
    if not isinstance(nr, dict):
        rd.fail("n_range", "must be a table with start, stop, step")
    start = rd.number(nr.get("start", 8), "n_range.start", integer=True)
    stop = rd.number(nr.get("stop", 48), "n_range.stop", integer=True)
    step = rd.number(nr.get("step", 1), "n_range.step", integer=True)
    if step < 1 or stop < start:
        rd.fail("n_range", "must be nonempty with step >= 1")
    m = rd.number(raw.get("m", 1), "m", integer=True)
    if m < 0:
        rd.fail("m", "must be nonnegative")
    if start < max(1, m):
        rd.fail("n_range.start", f"must be at least max(1, m) = {max(1, m)}")
    rl = raw.get("R_list", [1.0])
    if not isinstance(rl, list) or not rl:
        rd.fail("R_list", "must be a non-empty list")
    R_list = tuple(rd.number(R, f"R_list[{i}]") for i, R in enumerate(rl))
    eps = rd.number(raw.get("epsilon", 0.02), "epsilon")
    if not eps > 0:
        rd.fail("epsilon", "must be positive")
    exps = raw.get("experiments", [])
    if not isinstance(exps, list) or not exps:
        rd.fail("experiments", "at least one experiment is required")
    for e in exps:
        if e not in EXPERIMENTS:
            rd.fail("experiments", f"unknown experiment {e!r}; choose from {EXPERIMENTS}")
    if len(set(exps)) != len(exps):
        rd.fail("experiments", "each experiment may appear once")
    invs = raw.get("invariants", [])
    if not isinstance(invs, list):
        rd.fail("invariants", "must be a list")
    for v in invs:
        if v not in INVARIANTS:
            rd.fail("invariants", f"unknown invariant {v!r}; choose from {INVARIANTS}")
    tc = None
    if "two_circle" in raw:
        t = raw["two_circle"]
        if not isinstance(t, dict) or set(t) - {"r", "rho"}:
            rd.fail("two_circle", "must be a table with r and rho")
        tc = (rd.number(t.get("r", 1.0), "two_circle.r"), rd.number(t.get("rho", 0.8), "two_circle.rho"))
    out = raw.get("output", {})
    if not isinstance(out, dict):
        rd.fail("output", "must be a table")
    fmts = out.get("formats", list(FORMATS))
    if not isinstance(fmts, list) or any(f not in FORMATS for f in fmts):
        rd.fail("output.formats", f"must be a subset of {FORMATS}")
    digits = rd.number(out.get("digits", 20), "output.digits", integer=True)
    if not 1 <= digits <= 200:
        rd.fail("output.digits", "must lie in 1..200")
    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict) or set(tol) - set(DEFAULT_TOLERANCES):
        rd.fail("tolerances", f"keys must be among {sorted(DEFAULT_TOLERANCES)}")
    cfg = ExperimentConfig(
        function=fn,
        set=sset,
        precision_bits=bits,
        n_range=(start, stop, step),
        m=m,
        R_list=R_list,
        epsilon=eps,
        experiments=tuple(exps),
        invariants=tuple(invs),
        two_circle=tc,
        output=OutputSpec(str(out.get("dir", "walsh_lab_out")), tuple(fmts), digits),
        tolerances=tuple(sorted((k, rd.number(v, f"tolerances.{k}")) for k, v in tol.items())),
    )
    _check_against_profile(cfg, rd)
    return cfg


def _profile(cfg, ctx=None):
    emap = cfg.set.exterior_map()
    if emap.kind == "disc" and emap.radius == 1:
        return derive_profile(cfg.function, cfg.m + 1)
    return faber.continuum_radii(cfg.function, emap, cfg.m + 1, ctx)


def _check_against_profile(cfg, rd):
    try:
        prof = _profile(cfg)
    except DomainError as exc:
        rd.fail("function.poles", str(exc))
    R0 = prof[0]
    for i, R in enumerate(cfg.R_list):
        if not 1 <= R < R0:
            rd.fail(f"R_list[{i}]", f"R = {R} must satisfy 1 <= R < R_0 = {R0:.10g}")
    if cfg.two_circle is not None:
        r, rho = cfg.two_circle
        if not 1 / R0 < rho <= r <= 1:
            rd.fail("two_circle", f"need 1/R_0 < rho <= r <= 1 with 1/R_0 = {1 / R0:.10g}")
    if "subsequence" in cfg.experiments and not prof.finite_through(cfg.m):
        rd.fail("m", f"subsequence needs finite radii through R_{cfg.m}")
    if {"radii", "faber"} & set(cfg.experiments) and len(cfg.ns()) < rates.WINDOW:
        rd.fail("n_range", f"radius estimation needs at least {rates.WINDOW} values of n")
    if "hankel-quotient" in cfg.experiments and cfg.set.kind != "disc":
        rd.fail("experiments", "hankel-quotient is defined for set.kind = disc only")
    if cfg.set.sampling_radius is not None and not 1 < cfg.set.sampling_radius < R0:
        rd.fail("set.sampling_radius", f"must satisfy 1 < r < R_0 = {R0:.10g}")


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field="path") from exc
    if p.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, field="json", line=exc.lineno) from exc
    else:
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            # errors "at end of document" carry no line; point at the last one
            line = int(m.group(1)) if m else max(1, len(text.splitlines()))
            raise ConfigError(str(exc), field="toml", line=line) from exc
    return config_from_dict(raw, text)


# ---------------------------------------------------------------- running


@dataclass
class ExperimentResult:
    id: str
    kind: str
    rows: list
    columns: list
    summary: dict
    plots: list = field(default_factory=list)
    experiment: str = ""


@dataclass
class RunReport:
    """Results of one run; ``experiments`` holds one entry per output file."""

    config: dict
    experiments: list
    invariants: list
    metadata: dict
    timing: dict

    def grouped(self):
        """Requested experiment name -> its results, in request order."""
        out = {}
        for r in self.experiments:
            out.setdefault(r.experiment or r.kind, []).append(r)
        return out


def _stream_for(cfg, ctx):
    emap = cfg.set.exterior_map()
    n_max = cfg.ns()[-1]
    length = faber.reduction_length(n_max)
    if emap.kind == "disc" and emap.radius == 1:
        return taylor_coeffs(cfg.function, length, ctx), None
    red = faber.faber_coeffs(cfg.function, emap, length, cfg.set.sampling_radius, ctx)
    return red.g_stream, red


def _report_rows(rep, m, digits, in_lambda=None):
    rows = []
    for i, n in enumerate(rep.n_values):
        d = rep.deltas[i] if rep.deltas else ()
        row = [str(n)] + [fmt(d[k], digits) if k < len(d) else "" for k in range(m + 1)]
        root = rep.nth_roots[i]
        gap = ""
        if rep.mode == "rate" and rep.target:
            gap = fmt(abs(root - rep.target) / rep.target, digits)
        row += [fmt(rep.values[i], digits), fmt(root, digits), fmt(rep.target, digits) if rep.mode == "rate" else "", gap]
        if in_lambda is not None:
            row.append("true" if in_lambda[i] else "false")
        rows.append(row)
    return rows


def _columns(m, subsequence=False):
    cols = ["n"] + [f"delta_{k}" for k in range(m + 1)] + ["product", "nth_root", "target", "gap"]
    return cols + ["in_lambda"] if subsequence else cols


def _summary(rep, digits, check_tol=None):
    s = {
        "name": rep.name,
        "mode": rep.mode,
        "target": fmt(rep.target, digits) if rep.mode == "rate" else "0",
        "estimate": fmt(rep.estimate, digits),
        "regression_estimate": fmt(rep.regression_estimate, digits),
        "relative_gap": fmt(rep.relative_gap, digits),
        "window": rep.window,
        "n_values": rep.n_values,
    }
    if check_tol is not None and rep.mode == "rate" and rep.relative_gap is not None:
        s["tolerance"] = fmt(check_tol, digits)
        s["within_tolerance"] = bool(rep.relative_gap <= check_tol)
    for k, v in rep.extras.items():
        if k in ("full_sequence", "determinants", "in_lambda"):
            continue
        s[k] = _jsonable(v, digits)
    return s


def _jsonable(v, digits):
    if isinstance(v, bool) or v is None or isinstance(v, str):
        return v
    if isinstance(v, int):
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x, digits) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x, digits) for k, x in v.items()}
    return fmt(v, digits)


def _complex_text(z, digits):
    if not isinstance(z, type(gmpy2.mpc(0))):
        return fmt(z, digits)
    im = fmt(z.imag, digits)
    return f"{fmt(z.real, digits)}{'' if im.startswith('-') else '+'}{im}j"


def _tag(R):
    return f"R{R:g}"


def run_experiments(cfg, jobs=None):
    """Execute every requested experiment and invariant; returns a RunReport."""
    t0 = time.perf_counter()
    ctx = PrecisionContext(cfg.precision_bits)
    digits = cfg.output.digits
    ns = cfg.ns()
    m = cfg.m
    profile = _profile(cfg, ctx)
    emap = cfg.set.exterior_map()
    stream, reduction = _stream_for(cfg, ctx)
    rate_tol = cfg.tolerance("rate")
    results = []
    timing = {}

    def run_one(name, fn):
        t = time.perf_counter()
        first = len(results)
        try:
            fn()
        except (DomainError, NumericError) as exc:
            exc.experiment = name
            raise
        for r in results[first:]:
            r.experiment = name
        timing[name] = round(time.perf_counter() - t, 3)

    def radii():
        n_r = range(ns[0], ns[-1] + 1, cfg.n_range[2])
        est = hankel.hadamard_radii(stream, m + 1, n_r, ctx)
        rows = []
        for e in est:
            truth = profile[e.m] if e.m < len(profile) else math.inf
            gap = abs(e.value - truth) / truth if math.isfinite(truth) and math.isfinite(e.value) else None
            rows.append(
                [str(e.m), fmt(e.value, digits), fmt(e.window_max_value, digits), fmt(e.regression_value, digits),
                 str(e.window.start), str(e.window.stop - 1), fmt(e.residual, digits), fmt(truth, digits),
                 fmt(gap, digits), e.infinite_reason or ""]
            )  # fmt: skip
        cols = ["m", "value", "window_max", "regression", "window_start", "window_stop", "residual", "truth", "gap", "infinite_reason"]
        summary = {
            "estimates": [
                {"m": e.m, "value": fmt(e.value, digits), "method": e.method, "window_max": fmt(e.window_max_value, digits),
                 "regression": fmt(e.regression_value, digits), "residual": fmt(e.residual, digits),
                 "infinite_reason": e.infinite_reason}
                for e in est
            ],
            "profile": [fmt(x, digits) for x in profile.radii],
            "policy": "value = ratio of log-regression rates; window-max ratio reported alongside",
        }  # fmt: skip
        results.append(ExperimentResult("radii", "radii", rows, cols, summary))

    def add_rate(eid, kind, rep, in_lambda=None, extra=None):
        summ = _summary(rep, digits, rate_tol)
        if extra:
            summ.update(extra)
        results.append(
            ExperimentResult(eid, kind, _report_rows(rep, m, digits, in_lambda), _columns(m, in_lambda is not None), summ, [rep])
        )

    def products():
        for R in cfg.R_list:
            if R == 1:
                grid = walsh.walsh_grid(stream, m, ns, ctx, jobs)
                add_rate("products", "products", walsh.superdiagonal_product_rate(grid, profile))
            else:
                rep = walsh.scaled_product_rate(stream, R, m, ns, profile, ctx, jobs)
                add_rate(f"scaled-products_{_tag(R)}", "products", rep)

    def quotients():
        for R in cfg.R_list:
            add_rate(f"quotients_{_tag(R)}", "quotients", walsh.quotient_rate(stream, R, m, ns, ctx, profile, jobs))

    def hankel_quotient():
        for R in cfg.R_list:
            rep = walsh.hankel_quotient_rate(stream, R, m, ns, ctx, profile, jobs)
            add_rate(f"hankel-quotient_{_tag(R)}", "hankel-quotient", rep)

    def two_circle():
        r, rho = cfg.two_circle or (1.0, (1.0 + 1.0 / profile[0]) / 2.0)
        rep = walsh.two_circle_comparison(stream, r, rho, m, ns, ctx, profile, jobs, cfg.tolerance("two_circle"))
        add_rate("two-circle", "two-circle", rep)

    def subsequence():
        res = walsh.find_common_subsequence(stream, m, ns, cfg.epsilon, profile, cfg.R_list, ctx, jobs)
        rows = {
            f"{kind} k={k} R={R:g}": _summary(rep, digits, rate_tol)
            for kind, table in (("row", res.rows), ("partial", res.partials))
            for (R, k), rep in sorted(table.items())
        }
        add_rate(
            "subsequence",
            "subsequence",
            res.base,
            res.base.extras["in_lambda"],
            {"Lambda": res.Lambda, "along_lambda": rows, "diagnostic": res.diagnostic},
        )

    def faber_exp():
        red = reduction or faber.faber_coeffs(cfg.function, emap, faber.reduction_length(ns[-1]), cfg.set.sampling_radius, ctx)
        est = hankel.hadamard_radii(red.g_stream, m, range(ns[0], ns[-1] + 1, cfg.n_range[2]), ctx)
        levels = sorted({1.0, *cfg.R_list}) if emap.kind != "disc" else sorted(set(cfg.R_list))
        rows = []
        for R in levels:
            if R <= emap.r0:
                continue
            for theta, z in faber.level_curve(emap, R, 256, ctx):
                rows.append([fmt(R, digits), fmt(theta, digits), fmt(z.real, digits), fmt(z.imag, digits)])
        summary = {
            "map": emap.describe(),
            "r0": fmt(red.r0, digits),
            "capacity": fmt(emap.capacity, digits),
            "sampling_radius": fmt(red.sampling_radius, digits),
            "sample_count": red.sample_count,
            "tail_norm": fmt(red.tail_norm, digits),
            "continuum_radii": [fmt(x, digits) for x in profile.radii],
            "hadamard_on_g": [fmt(e.value, digits) for e in est],
            "aliasing_bound_heuristic": True,
        }
        results.append(ExperimentResult("faber", "faber", rows, ["level", "theta", "re", "im"], summary))

    table = {
        "radii": radii,
        "products": products,
        "quotients": quotients,
        "hankel-quotient": hankel_quotient,
        "two-circle": two_circle,
        "subsequence": subsequence,
        "faber": faber_exp,
    }
    for name in cfg.experiments:
        run_one(name, table[name])
    checks = [_invariant(name, cfg, stream, profile, emap, ctx, jobs, digits) for name in cfg.invariants]
    timing["total"] = round(time.perf_counter() - t0, 3)
    metadata = {
        "precision_bits": cfg.precision_bits,
        "set": emap.describe(),
        "profile": [fmt(x, digits) for x in profile.radii],
        "f0": _complex_text(stream.f0, digits),
        "stream_length": len(stream),
        "rate_estimator": "window-max over the last 8 nth roots; log-regression over the trailing half as diagnostic",
        "heuristics": sorted(set(stream.heuristic_flags) | {"tail-extrapolation-heuristic"}),
    }
    return RunReport(cfg.to_dict(), results, checks, metadata, timing)


def _invariant(name, cfg, s, profile, emap, ctx, jobs, digits):
    ns = cfg.ns()
    m = cfg.m
    failures = []
    detail = {}
    if name == "det-product":
        for n in ns:
            chk = aak.det_vs_product_check(s, n, m, ctx)
            if not chk.holds:
                failures.append({"n": n, "k": m})
        detail["cells"] = len(ns)
    elif name == "quotient-le-one":
        for R in cfg.R_list:
            if R == 1:
                continue
            rep = walsh.quotient_rate(s, R, m, ns, ctx, profile, jobs)
            failures += [{"n": n, "k": None, "R": R} for n, v in zip(ns, rep.values) if v > 1]
    elif name == "scaling-identity":
        worst = gmpy2.mpfr(0)
        with ctx.scope():
            thresh = gmpy2.mul_2exp(gmpy2.mpfr(1), -(cfg.precision_bits // 4))
            for R in cfg.R_list:
                for n in ns:
                    for k in range(m + 1):
                        err = hankel.verify_scaling_identity(s, R, n, k, ctx)
                        worst = max(worst, err)
                        if err > thresh:
                            failures.append({"n": n, "k": k, "R": R})
        detail["max_relative_error"] = fmt(worst, digits)
    elif name == "orthogonality":
        tol = cfg.tolerance("orthogonality")
        worst = 0.0
        for n in sorted({ns[0], ns[-1]}):
            spec = aak.aak_errors(s, n, m, ctx)
            H = aak.build_weighted_hankel(s, spec.l, spec.N)
            res = float(aak.bilinear_orthogonality_check(H, spec, ctx))
            worst = max(worst, res)
            if res > tol:
                failures.append({"n": n, "k": None})
        detail["max_residual"] = fmt(worst, digits)
    elif name == "round-trip":
        with ctx.scope():
            tol = gmpy2.mul_2exp(gmpy2.mpfr(1), -(cfg.precision_bits // 2))
            for rad in (1.1, 2.0, 5.0):
                if rad <= emap.r0:
                    continue
                for j in range(16):
                    th = 2 * gmpy2.const_pi() * j / 16
                    w = gmpy2.mpc(rad * gmpy2.cos(th), rad * gmpy2.sin(th))
                    back = faber._phi(emap, faber.psi(emap, w), ctx)
                    if abs(back - w) > tol * abs(w):
                        failures.append({"n": None, "k": None, "radius": rad, "sample": j})
    elif name == "bracket":
        grid = walsh.walsh_grid(s, m, ns, ctx, jobs, bracket=True)
        failures += [{"n": c.n, "k": c.k} for c in grid.cells if not c.rho_lower <= c.rho_upper]
        detail["bracket_r"] = fmt(grid.cells[0].bracket_r, digits)
        detail["bracket_constant"] = fmt(grid.cells[0].bracket_constant, digits)
    elif name == "row-order":
        for n in ns:
            vals = aak.aak_errors(s, n, m, ctx).values
            failures += [{"n": n, "k": k} for k in range(1, len(vals)) if vals[k] > vals[k - 1]]
    return {"name": name, "passed": not failures, "failures": failures, "detail": detail}


# ---------------------------------------------------------------- emitters


def emit_csv(result, path):
    """One CSV per experiment with a header row, rows sorted by their first column."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow(row)


def report_json(report):
    return {
        "config": report.config,
        "metadata": report.metadata,
        "experiments": [
            {
                "experiment": name,
                "results": [{"id": r.id, "columns": r.columns, "summary": r.summary, "rows": r.rows} for r in parts],
            }
            for name, parts in report.grouped().items()
        ],
        "invariants": report.invariants,
    }


def emit_json(report, path):
    with open(path, "w") as fh:
        json.dump(report_json(report), fh, indent=2, sort_keys=False)
        fh.write("\n")


_W, _H, _PAD = 640, 400, 56


def emit_svg(result, path):
    """Log-scale plot of the nth-root sequence with a dashed target line."""
    rep = result.plots[0]
    xs = rep.n_values
    ys = [float(v) for v in rep.nth_roots]
    pos = [y for y in ys if y > 0]
    target = float(rep.target) if rep.mode == "rate" and rep.target else None
    vals = pos + ([target] if target else [])
    if not vals:
        vals = [1.0]
    lo, hi = math.log10(min(vals)), math.log10(max(vals))
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    x0, x1 = xs[0], xs[-1] if xs[-1] != xs[0] else xs[0] + 1

    def px(n):
        return _PAD + (n - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(y):
        return _H - _PAD - (math.log10(y) - lo) / (hi - lo) * (_H - 2 * _PAD)

    pts = " ".join(f"{px(n):.2f},{py(y):.2f}" for n, y in zip(xs, ys) if y > 0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" fill="none" stroke="#888"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{_esc(rep.name)}: nth root vs n</text>',
        f'<text x="{_W / 2:.0f}" y="{_H - 16}" text-anchor="middle" font-family="sans-serif" font-size="12">n ({x0}..{xs[-1]})</text>',
        f'<text x="8" y="{_PAD - 8}" font-family="sans-serif" font-size="11">log10 scale [{lo:.3f}, {hi:.3f}]</text>',
        f'<polyline fill="none" stroke="#1f5fbf" stroke-width="1.5" points="{pts}"/>',
    ]
    if target:
        ty = py(target)
        parts.append(f'<line x1="{_PAD}" y1="{ty:.2f}" x2="{_W - _PAD}" y2="{ty:.2f}" stroke="#c0392b" stroke-dasharray="6,4"/>')
        parts.append(f'<text x="{_W - _PAD}" y="{ty - 6:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">target {target:.6g}</text>')
    else:
        parts.append(f'<text x="{_W - _PAD}" y="{_PAD + 16}" text-anchor="end" font-family="sans-serif" font-size="12">R = &#8734;</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def _esc(text):
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_outputs(report, cfg):
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in report.experiments:
        if "csv" in cfg.output.formats:
            p = out / f"{r.id}.csv"
            emit_csv(r, p)
            written.append(p)
        if "svg" in cfg.output.formats and r.plots:
            p = out / f"{r.id}.svg"
            emit_svg(r, p)
            written.append(p)
    if "json" in cfg.output.formats:
        p = out / "report.json"
        emit_json(report, p)
        written.append(p)
    # wall-clock lives apart from the report so reruns stay byte-identical
    with open(out / "timing.json", "w") as fh:
        json.dump(report.timing, fh, indent=2)
        fh.write("\n")
    return written


# ---------------------------------------------------------------- entry point


def _apply_overrides(cfg, args):
    out = cfg.output
    if getattr(args, "out_dir", None):
        out = replace(out, dir=args.out_dir)
    if getattr(args, "format", None):
        fmts = tuple(f.strip() for f in args.format.split(",") if f.strip())
        bad = [f for f in fmts if f not in FORMATS]
        if bad or not fmts:
            raise ConfigError(f"--format must be a comma list of {FORMATS}", field="--format")
        out = replace(out, formats=fmts)
    cfg = replace(cfg, output=out)
    if getattr(args, "precision_bits", None):
        if args.precision_bits < 64:
            raise ConfigError("must be at least 64", field="--precision-bits")
        cfg = replace(cfg, precision_bits=args.precision_bits)
    return cfg


def _print_catalog():
    print("function specs:")
    for name in CATALOG:
        prof = derive_profile(CATALOG[name], 3)
        radii = ", ".join("inf" if math.isinf(r) else f"{r:g}" for r in prof.radii)
        print(f"  {name:16s} {CATALOG_NOTES[name]}  [R_0..R_3 = {radii}]")
    print("exterior maps (set.kind):")
    for name, emap in faber.MAP_CATALOG.items():
        print(f"  {name:16s} {emap.describe()}  capacity={emap.capacity:g} r0={emap.r0:g}")
    print("experiments: " + ", ".join(EXPERIMENTS))
    print("invariants: " + ", ".join(INVARIANTS))


def build_parser():
    p = argparse.ArgumentParser(prog="walsh-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the experiments of a config"), ("validate", "check a config without running it")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="TOML or JSON experiment config")
        sp.add_argument("--precision-bits", type=int, help="override precision_bits")
        sp.add_argument("--out-dir", help="override output.dir")
        sp.add_argument("--format", help="comma list of csv,json,svg")
        sp.add_argument("--jobs", type=int, help="worker processes (default: $WALSH_LAB_JOBS or 1)")
    sub.add_parser("catalog", help="list built-in specs, maps, experiments and invariants")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        _print_catalog()
        return EXIT_OK
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {len(cfg.experiments)} experiment(s), n = {cfg.n_range[0]}..{cfg.n_range[1]}, m = {cfg.m}")
        return EXIT_OK
    jobs = walsh.resolve_jobs(args.jobs)
    try:
        report = run_experiments(cfg, jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"domain error in experiment {getattr(exc, 'experiment', '?')}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except NumericError as exc:
        print(f"numeric error in experiment {getattr(exc, 'experiment', '?')}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WalshLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        written = write_outputs(report, cfg)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for w in written:
        print(w)
    failed = [c["name"] for c in report.invariants if not c["passed"]]
    if failed:
        print("invariant failures: " + ", ".join(failed), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
