"""Convergence studies, property suites and report serialization.

A :class:`Report` collects a table of rows (one per resolution for a
convergence study) and a list of named :class:`Check` results.  Reports are
byte-for-byte reproducible for a fixed seed: wall-clock fields are only
written when ``include_timing`` is requested.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .diagnostics import (
    band_ratio,
    extension_constants,
    poincare_constants,
    random_energy_ratios,
    sw_bounds,
)
from .domains import ImplicitDomain, harmonic_polynomial, make_domain, make_solution, sin_cosh
from .driver import SolveConfig, measure_contraction, solve_dirichlet
from .errors import ConfigError, FdbieError, OperatorError
from .fields import (
    green_residual,
    inner,
    jump_pairing,
    laplacian_h,
    lift_from_trace,
    make_field,
    product_rule_defect,
    random_field,
    trace_M,
    differences,
)
from .geometry import DEFAULT_DELTA, GridGeometry, build_geometry
from .operators import (
    apply_Ah,
    apply_calA,
    apply_calB,
    assemble_dense,
    assemble_gram_parts,
    fsharp_spread,
    interp_Q,
    norm1,
    norm2,
    restrict_sharp,
    single_layers,
    sl_inner,
    spectrum,
    tilde_lift,
)
from .solvers import (
    DEFAULT_CG_TOL,
    interface_energy_residual,
    quadratic_extrapolate,
    shortley_weller,
    solve_interface,
    solve_single_layer,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("n", "h", "err_max", "err_l2", "order_max", "order_l2", "iters", "seconds")
FORMATS = ("json", "csv", "text")
TIMING_KEYS = ("seconds",)
SMALL_N = 16  # fixed-point and dense solves are compared on phi only up to this size


# -- configuration ------------------------------------------------------------------


@dataclass
class StudyConfig:
    """Settings shared by every harness entry point.

    ``domain`` and ``solution`` are mappings such as ``{"family": "star", "b": 0.2}``
    and ``{"kind": "complex_power", "m": 3}``.  ``suite_domains`` lists the
    geometries a property suite runs on.
    """

    domain: dict = field(default_factory=lambda: {"family": "circle"})
    solution: dict = field(default_factory=lambda: {"kind": "complex_power", "m": 3, "part": "re"})
    resolutions: list = field(default_factory=lambda: [32, 64, 128, 256])
    delta: float = DEFAULT_DELTA
    method: str = "gmres"
    linear: str = "direct"
    fp_tol: float = 1e-10
    fp_max_iters: int = 400
    fixed_point_max_iters: int = 50000
    cg_tol: float = DEFAULT_CG_TOL
    seed: int = 0
    suite_domains: list = field(default_factory=lambda: [{"family": "circle"}, {"family": "star"}])
    base_n: int | None = None
    order_band: list | None = field(default_factory=lambda: [1.7, 2.3])
    max_error: float | None = None
    min_ratio: float | None = None
    out_dir: str | None = None
    formats: list = field(default_factory=lambda: ["json"])
    single_thread: bool = False
    include_timing: bool = False
    label: str = "self-chosen manufactured solution"

    def __post_init__(self):
        res = [int(n) for n in self.resolutions]
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ConfigError(f"resolutions must be strictly increasing, got {res}")
        if any(n < 8 for n in res):
            raise ConfigError("resolutions must be at least 8")
        self.resolutions = res
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ConfigError(f"unknown output formats {bad}; known: {FORMATS}")
        if self.order_band is not None and len(self.order_band) != 2:
            raise ConfigError("order_band must be [low, high]")
        self.solve_config()  # validates method and tolerances

    def solve_config(self, n=None, delta=None, method=None, max_iters=None) -> SolveConfig:
        return SolveConfig(
            method=method or self.method,
            fp_tol=self.fp_tol,
            fp_max_iters=max_iters or self.fp_max_iters,
            cg_tol=self.cg_tol,
            delta=self.delta if delta is None else delta,
            n=n or self.resolutions[0],
            linear=self.linear,
        )

    def build_domain(self, spec=None) -> ImplicitDomain:
        spec = dict(spec or self.domain)
        family = spec.pop("family", None)
        if family is None:
            raise ConfigError("domain section needs a 'family' key")
        return make_domain(family, **spec)

    def build_solution(self, domain: ImplicitDomain):
        sol = make_solution(self.solution, domain.dim)
        if sol.dim != domain.dim:
            raise ConfigError(f"solution {sol.name} is {sol.dim}D but the domain is {domain.dim}D")
        if sol.singular_point is not None and not domain.is_exterior(sol.singular_point):
            raise ConfigError(f"singular point {sol.singular_point} of {sol.name} is not strictly outside the domain")
        return sol

    @classmethod
    def from_mapping(cls, data: dict) -> "StudyConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


# -- reports --------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    measured: dict
    threshold: str

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {vals}  ({self.threshold})"


@dataclass
class Report:
    kind: str
    config: dict
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    environment: dict = field(default_factory=lambda: environment_stamp())

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self, include_timing=False) -> dict:
        out = {
            "kind": self.kind,
            "passed": self.passed,
            "config": self.config,
            "rows": self.rows,
            "checks": [asdict(c) for c in self.checks],
            "stats": self.stats,
            "errors": self.errors,
            "environment": self.environment,
        }
        if not include_timing:
            out = _drop_keys(out, TIMING_KEYS)
        return _jsonable(out)


def environment_stamp() -> dict:
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "machine": platform.machine(),
    }


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _drop_keys(obj, keys):
    if isinstance(obj, dict):
        return {k: _drop_keys(v, keys) for k, v in obj.items() if k not in keys}
    if isinstance(obj, list):
        return [_drop_keys(v, keys) for v in obj]
    return obj


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def render(report: Report, fmt: str, include_timing=False) -> str:
    """Serialize a report to a string (``json``, ``csv`` or ``text``)."""
    if fmt == "json":
        return json.dumps(report.to_dict(include_timing), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if report.kind == "convergence":
            writer.writerow(CSV_COLUMNS)
            for row in report.rows:
                writer.writerow([_csv_cell(row.get(c), c, include_timing) for c in CSV_COLUMNS])
        else:
            writer.writerow(("name", "passed", "threshold", "measured"))
            for c in report.checks:
                writer.writerow((c.name, c.passed, c.threshold, json.dumps(_jsonable(c.measured), sort_keys=True)))
        return buf.getvalue()
    if fmt == "text":
        return _text_table(report, include_timing)
    raise ConfigError(f"unknown format {fmt!r}; known: {FORMATS}")


def _csv_cell(v, col, include_timing):
    if v is None or (col in TIMING_KEYS and not include_timing):
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _text_table(report, include_timing):
    lines = [f"{report.kind}: {'PASS' if report.passed else 'FAIL'}"]
    if report.rows:
        cols = [c for c in report.rows[0] if include_timing or c not in TIMING_KEYS]
        cells = [[_fmt(r.get(c)) for c in cols] for r in report.rows]
        widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
        lines.append("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
        for row in cells:
            lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    lines.extend(c.line() for c in report.checks)
    lines.extend(f"ERROR {e}" for e in report.errors)
    return "\n".join(lines) + "\n"


def emit_report(report: Report, out_dir, formats=("json",), stem="report", include_timing=False) -> list:
    """Write the report in each format under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            ext = {"json": "json", "csv": "csv", "text": "txt"}.get(fmt)
            if ext is None:
                raise ConfigError(f"unknown format {fmt!r}; known: {FORMATS}")
            path = out / f"{stem}.{ext}"
            path.write_text(render(report, fmt, include_timing))
            paths.append(path)
    except OSError as exc:
        raise FdbieError(f"cannot write report to {exc.filename or out}: {exc.strerror}") from exc
    return paths


def _map(fn, items, single_thread):
    if single_thread or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(4, len(items))) as pool:
        return list(pool.map(fn, items))


# -- convergence ----------------------------------------------------------------------


def observed_orders(errors) -> list:
    """``log2(e_h / e_{h/2})`` between consecutive entries (None where undefined)."""
    out = [None]
    for a, b in zip(errors, errors[1:]):
        ok = a is not None and b is not None and a > 0 and b > 0
        out.append(float(np.log2(a / b)) if ok else None)
    return out


def run_convergence(config: StudyConfig) -> Report:
    """Solve at each resolution, record node errors and observed orders."""
    domain = config.build_domain()
    exact = config.build_solution(domain)
    report = Report("convergence", config.to_dict(), stats={"solution": exact.name, "domain": domain.name,
                                                              "label": config.label})

    def one(n):
        t0 = time.perf_counter()
        try:
            geom = build_geometry(domain, n, config.delta)
            rep = solve_dirichlet(geom, exact(geom.gamma0_points), config.solve_config(n), exact=exact)
        except FdbieError as exc:
            return {"n": n, "h": 2 * domain.half_width / n, "error": f"{type(exc).__name__}: {exc}"}
        log.info("n=%d err_max=%.3e iters=%d", n, rep.errors["err_max"], rep.iterations)
        return {"n": n, "h": geom.h, **rep.errors, "iters": rep.iterations,
                "n_gamma0": geom.n_gamma0, "seconds": time.perf_counter() - t0}

    rows = _map(one, config.resolutions, config.single_thread)
    for row in rows:
        if "error" in row:
            report.errors.append(f"n={row['n']}: {row.pop('error')}")
    for key in ("max", "l2"):
        orders = observed_orders([r.get(f"err_{key}") for r in rows])
        for r, o in zip(rows, orders):
            r[f"order_{key}"] = o
    report.rows = [{c: r.get(c) for c in CSV_COLUMNS + ("n_gamma0",)} for r in rows]
    _convergence_checks(report, config)
    return report


def _convergence_checks(report, config):
    rows = report.rows
    errs = [r["err_max"] for r in rows]
    if config.order_band is not None and len(rows) >= 2:
        lo, hi = config.order_band
        finest = [r["order_max"] for r in rows[-2:] if r["order_max"] is not None] if len(rows) >= 3 \
            else [rows[-1]["order_max"]]
        ok = len(finest) >= 1 and all(o is not None and lo <= o <= hi for o in finest)
        report.checks.append(Check("order_band", bool(ok), {"orders": finest}, f"max-norm orders in [{lo}, {hi}]"))
    if config.max_error is not None:
        worst = max((e for e in errs if e is not None), default=float("inf"))
        report.checks.append(Check("max_error", worst <= config.max_error, {"err_max": worst},
                                   f"<= {config.max_error:g}"))
    if config.min_ratio is not None and len(rows) >= 2:
        ratios = [a / b if a and b else 0.0 for a, b in zip(errs, errs[1:])]
        report.checks.append(Check("error_ratio", min(ratios) >= config.min_ratio, {"ratios": ratios},
                                   f">= {config.min_ratio:g}"))


def run_solve(config: StudyConfig, n=None) -> Report:
    """One Dirichlet solve with the configured domain and reference solution."""
    n = n or config.resolutions[0]
    domain = config.build_domain()
    exact = config.build_solution(domain)
    geom = build_geometry(domain, n, config.delta)
    scfg = config.solve_config(n)
    report = Report("solve", config.to_dict(), stats={"solution": exact.name, "domain": domain.name})
    try:
        f = exact(geom.gamma0_points)
        rep = solve_dirichlet(geom, f, scfg, exact=exact)
    except FdbieError as exc:
        report.errors.append(f"{type(exc).__name__}: {exc}")
        trace = getattr(exc, "trace", None)
        if trace:
            report.stats["residual_trace"] = list(trace)
        return report
    resid = float(np.max(np.abs(f - apply_Ah(geom, rep.phi, scfg.linear, scfg.cg_tol)), initial=0.0))
    report.stats.update(rep.summary())
    report.stats["residual_trace"] = rep.residuals
    report.rows = [{"n": n, "h": geom.h, **rep.errors, "iters": rep.iterations, "seconds": rep.seconds}]
    report.checks.append(Check("boundary_residual", resid <= scfg.fp_tol, {"residual": resid},
                               f"<= fp_tol {scfg.fp_tol:g}"))
    report.checks.append(Check("trace_consistency", _q_matches(geom, rep), {}, "Q(u+) = Ah phi to round-off"))
    if not rep.monotone:
        report.stats["flag"] = "residual trace not monotone after 3 iterations"
    return report


def _q_matches(geom, rep):
    q = interp_Q(geom, rep.u_plus)
    return bool(np.allclose(q, apply_Ah(geom, rep.phi), rtol=0, atol=1e-12 * max(1.0, np.abs(q).max())))


# -- property suites ------------------------------------------------------------------


@dataclass(frozen=True)
class Suite:
    name: str
    base_n: int
    levels: int
    per_geometry: Callable  # (geom, rng, cfg, level) -> (checks, measures)
    across: Callable | None = None  # (label, [(n, measures)]) -> checks
    summary: str = ""


def _tag(name, geom):
    return f"{name}[{geom.domain.name},n={geom.n}]"


def _green(geom, rng, cfg, level):
    worst = {}
    for side in ("plus", "minus"):
        worst[side] = max(
            green_residual(geom, random_field(geom, side, rng), random_field(geom, side, rng)) for _ in range(20)
        )
    prod = max(product_rule_defect(geom, random_field(geom, "plus", rng)) for _ in range(5))
    return [
        Check(_tag("green.identity", geom), max(worst.values()) <= 1e-11, worst, "relative residual <= 1e-11"),
        Check(_tag("green.product_rule", geom), prod <= 1e-10 * geom.n, {"defect": prod}, "<= 1e-10 n"),
    ], {}


def _competitor(geom, side, v, psi, rng, amp):
    base = v.values + amp * rng.uniform(-1, 1, geom.n_nodes)
    return lift_from_trace(geom, base, psi, side)


def _minimization(geom, rng, cfg, level):
    tol = 10 * cfg.cg_tol
    margin = {"plus": np.inf, "minus": np.inf}
    trace_err = 0.0
    for side in ("plus", "minus"):
        for _ in range(10):
            psi = rng.uniform(-1, 1, geom.n_cut)
            v = solve_single_layer(geom, psi, side, cfg.linear, cfg.cg_tol)
            trace_err = max(trace_err, float(np.max(np.abs(trace_M(geom, v) - psi))))
            e0 = inner(geom, v, v)
            for j in range(20):
                z = _competitor(geom, side, v, psi, rng, 1.0 if j % 2 else 1e-3)
                margin[side] = min(margin[side], inner(geom, z, z) - e0)
    return [
        Check(_tag("minimization.energy", geom), min(margin.values()) >= -tol, margin,
              f"<S psi,S psi> <= <z,z> + {tol:g}"),
        Check(_tag("minimization.trace", geom), trace_err <= 1e-12, {"trace_error": trace_err}, "M S psi = psi"),
    ], {}


def _spectrum(geom, rng, cfg, level):
    tol = 10 * cfg.cg_tol
    gp, gm = assemble_gram_parts(geom, cfg.linear, cfg.cg_tol)
    G = gp + gm
    B = assemble_dense(geom, "calB", cfg.linear, cfg.cg_tol)
    A = assemble_dense(geom, "calA", cfg.linear, cfg.cg_tol)
    sb = spectrum(geom, "calB", gram=G, dense=B)
    sa = spectrum(geom, "calA", gram=G, dense=A)
    r = sb.r_hat
    one = np.ones(geom.n_cut)
    const_err = float(np.max(np.abs(apply_calA(geom, one, cfg.linear, cfg.cg_tol) - 1.0)))
    ident = float(np.max(np.abs(A - np.eye(geom.n_cut) - B)))
    ratios, adj = [], []
    for _ in range(10):
        phi, zeta = rng.uniform(-1, 1, (2, geom.n_cut))
        bphi = B @ phi
        ratios.append(np.sqrt(bphi @ G @ bphi) / np.sqrt(phi @ G @ phi))
        lhs, rhs = bphi @ G @ zeta, -(phi @ gp @ zeta)
        adj.append(abs(lhs - rhs) / max(1.0, abs(lhs)))
    checks = [
        Check(_tag("spectrum.self_adjoint", geom), sb.asymmetry <= 1e-8, {"asymmetry": sb.asymmetry}, "<= 1e-8"),
        Check(_tag("spectrum.calB", geom), r < 1 and sb.eigenvalues.max() <= 1e-8,
              {"r_hat": r, "eig_max": float(sb.eigenvalues.max())}, "eig in [-r_hat, 1e-8], r_hat < 1"),
        Check(_tag("spectrum.calA", geom),
              bool(sa.eigenvalues.min() >= 1 - r - 1e-8 and sa.eigenvalues.max() <= 1 + 1e-8),
              {"eig_min": float(sa.eigenvalues.min()), "eig_max": float(sa.eigenvalues.max())},
              "eig in [1 - r_hat, 1 + 1e-8]"),
        Check(_tag("spectrum.constant_eigenvector", geom), const_err <= tol, {"error": const_err}, f"<= {tol:g}"),
        Check(_tag("spectrum.A_minus_I_minus_B", geom), ident <= tol, {"error": ident}, f"<= {tol:g}"),
        Check(_tag("spectrum.contraction", geom), max(ratios) <= r * (1 + 1e-6),
              {"max_ratio": float(max(ratios)), "r_hat": r}, "||B phi||_SL <= r_hat ||phi||_SL"),
        Check(_tag("spectrum.B_pairing", geom), max(adj) <= 1e-9, {"defect": float(max(adj))},
              "(B phi, zeta) = -<S+phi, S+zeta>+"),
    ]
    if level == 0:
        se = spectrum(geom, "Ah", cfg.linear, cfg.cg_tol)
        ok = se.imag_max <= 1e-8 and se.eigenvalues.min() > 0 and se.eigenvalues.max() <= 1 + 1e-8
        checks.append(Check(_tag("spectrum.Ah", geom), bool(ok),
                            {"imag_max": se.imag_max, "eig_min": float(se.eigenvalues.min()),
                             "eig_max": float(se.eigenvalues.max())}, "real, in (0, 1 + 1e-8]"))
    return checks, {"r_hat": r}


def _spectrum_across(label, results):
    r = [m["r_hat"] for _, m in results]
    ratio = band_ratio(r)
    return [Check(f"spectrum.r_hat_stable[{label}]", ratio <= 1.5, {"r_hat": r, "ratio": ratio}, "within factor 1.5")]


def _identities(geom, rng, cfg, level):
    tol = 10 * cfg.cg_tol
    ab, pair, sym, energy, post = 0.0, 0.0, 0.0, 0.0, 0.0
    for _ in range(10):
        phi, zeta = rng.uniform(-1, 1, (2, geom.n_cut))
        a = apply_calA(geom, phi, cfg.linear, cfg.cg_tol)
        b = apply_calB(geom, phi, cfg.linear, cfg.cg_tol)
        ab = max(ab, float(np.max(np.abs(a - phi - b))))
        vp, vm = single_layers(geom, phi, cfg.linear, cfg.cg_tol)
        e = inner(geom, vp, vp) + inner(geom, vm, vm)
        pair = max(pair, abs(e - jump_pairing(geom, vp, vm, phi)) / max(1.0, e))
        s1, s2 = sl_inner(geom, phi, zeta, cfg.linear), sl_inner(geom, zeta, phi, cfg.linear)
        sym = max(sym, abs(s1 - s2) / max(1.0, abs(s1)))
        up, um = solve_interface(geom, phi, cfg.linear, cfg.cg_tol)
        energy = max(energy, interface_energy_residual(geom, phi, up, um))
        post = max(post, interface_postconditions(geom, phi, up, um))
    return [
        Check(_tag("identities.A_minus_I_minus_B", geom), ab <= tol, {"error": ab}, f"<= {tol:g}"),
        Check(_tag("identities.jump_pairing", geom), pair <= tol, {"defect": pair}, f"<= {tol:g} scale"),
        Check(_tag("identities.sl_symmetry", geom), sym <= 1e-10, {"asymmetry": sym}, "<= 1e-10"),
        Check(_tag("identities.interface_energy", geom), energy <= tol, {"defect": energy}, f"<= {tol:g} scale"),
        Check(_tag("identities.interface_conditions", geom), post <= tol, {"defect": post}, f"<= {tol:g}"),
    ], {}


def interface_postconditions(geom: GridGeometry, phi, u_plus, u_minus) -> float:
    """Largest defect among the five interface conditions (Laplacians scaled by h^2)."""
    h2 = geom.h**2
    cut = geom.cut_interval
    return max(
        float(np.max(np.abs(laplacian_h(geom, u_plus)))) * h2,
        float(np.max(np.abs(laplacian_h(geom, u_minus)))) * h2,
        float(np.max(np.abs(trace_M(geom, u_plus) - trace_M(geom, u_minus) - phi))),
        float(np.max(np.abs(differences(geom, u_plus)[cut] - differences(geom, u_minus)[cut]))) * geom.h,
        float(np.max(np.abs(u_minus.values[geom.on_box]), initial=0.0)),
    )


def _contraction(geom, rng, cfg, level):
    f = rng.uniform(-1, 1, geom.n_gamma0)
    rep = solve_dirichlet(geom, f, cfg.solve_config(geom.n, method="fixed_point",
                                                    max_iters=cfg.fixed_point_max_iters))
    r_hat = spectrum(geom, "calB", cfg.linear, cfg.cg_tol).r_hat
    rate = rep.contraction
    ok = rate is not None and rate < 1 and abs(rate - r_hat) <= 0.15
    checks = [Check(_tag("contraction.rate", geom), bool(ok),
                    {"rate": rate, "r_hat": r_hat, "iterations": rep.iterations},
                    "rate < 1 and |rate - r_hat| <= 0.15")]
    if geom.n <= SMALL_N:
        direct = solve_dirichlet(geom, f, cfg.solve_config(geom.n, method="dense_direct"))
        diff = float(np.max(np.abs(direct.phi - rep.phi)))
        checks.append(Check(_tag("contraction.agrees_with_direct", geom), diff <= 10 * cfg.fp_tol,
                            {"phi_difference": diff}, f"<= {10 * cfg.fp_tol:g}"))
    return checks, {}


def _extension(geom, rng, cfg, level):
    c = extension_constants(geom, cfg.linear)
    sampled = random_energy_ratios(geom, rng, 10, cfg.linear)
    ok = sampled["forward_max"] <= c["forward"] * (1 + 1e-9) and sampled["reverse_max"] <= c["reverse"] * (1 + 1e-9)
    return [Check(_tag("extension.sampled_below_extremal", geom), ok, {**c, **sampled}, "sampled ratios <= C1")], c


def _band_checks(suite, keys, factor):
    def across(label, results):
        out = []
        for key in keys:
            vals = [m[key] for _, m in results]
            ratio = band_ratio(vals)
            out.append(Check(f"{suite}.{key}_band[{label}]", ratio <= factor, {"values": vals, "ratio": ratio},
                             f"max/min <= {factor:g}"))
        return out

    return across


def _poincare(geom, rng, cfg, level):
    c = poincare_constants(geom)
    hd = geom.h**geom.dim
    worst = 0.0
    for _ in range(10):
        u = lift_from_trace(geom, rng.uniform(-1, 1, geom.n_nodes), np.zeros(geom.n_cut), "plus")
        lhs = float(np.sum(u.values[geom.plus_nodes] ** 2) * hd)
        worst = max(worst, lhs / (c["trace_zero"] * inner(geom, u, u)))
    return [Check(_tag("poincare.sampled_below_constant", geom), worst <= 1 + 1e-9, {**c, "sampled_ratio": worst},
                  "sum u^2 h^d <= C <u,u>+ for zero-trace fields")], c


def _norm2(geom, rng, cfg, level):
    tol = 10 * cfg.cg_tol
    sc = sw_bounds(geom, sin_cosh()(geom.gamma0_points), cfg.linear)
    sx = sw_bounds(geom, harmonic_polynomial("x")(geom.gamma0_points), cfg.linear)
    ratio_ok, mp = True, 0.0
    for _ in range(3):
        phi = rng.uniform(-1, 1, geom.n_gamma0)
        a = apply_Ah(geom, phi, cfg.linear, cfg.cg_tol)
        ratio_ok &= norm2(geom, a, cfg.linear) <= 2 * norm1(geom, phi, cfg.linear) + tol
        f = rng.uniform(-1, 1, geom.n_gamma0)
        w = shortley_weller(geom, f, cfg.linear, cfg.cg_tol)[geom.plus_nodes]
        mp = max(mp, float(w.max() - f.max()), float(f.min() - w.min()))
    measures = {"norm2_sincosh": sc["norm2"], "norm2_x": sx["norm2"], "flux_interior": sc["flux_interior"],
                "flux_weighted": sc["flux_weighted"]}
    return [
        Check(_tag("norm2.Ah_bounded", geom), bool(ratio_ok), {}, "||Ah phi||_2 <= 2 ||phi||_1"),
        Check(_tag("norm2.max_principle", geom), mp <= tol, {"overshoot": mp}, f"<= {tol:g}"),
    ], measures


def _fsharp(geom, rng, cfg, level):
    phi0 = rng.uniform(-1, 1, geom.n_gamma0)
    lifted = tilde_lift(geom, phi0)
    exact_rt = bool(np.array_equal(restrict_sharp(geom, lifted), phi0))
    psi = rng.uniform(-1, 1, geom.n_cut)
    v = lift_from_trace(geom, rng.uniform(-1, 1, geom.n_nodes), psi, "plus")
    vm = lift_from_trace(geom, rng.uniform(-1, 1, geom.n_nodes), psi, "minus")
    trace_rt = max(float(np.max(np.abs(trace_M(geom, v) - psi))), float(np.max(np.abs(trace_M(geom, vm) - psi))))
    f = rng.uniform(-1, 1, geom.n_gamma0)
    wext = quadratic_extrapolate(geom, shortley_weller(geom, f, cfg.linear, cfg.cg_tol), f)
    q_rt = float(np.max(np.abs(interp_Q(geom, wext) - f)))
    up, _ = solve_interface(geom, lifted, cfg.linear, cfg.cg_tol)
    spread, _ = fsharp_spread(geom, up.ext)
    rejects = True
    if geom.multiplicity:
        bad = lifted.copy()
        bad[next(iter(geom.multiplicity.values()))[0]] += 1.0
        try:
            restrict_sharp(geom, bad)
            rejects = False
        except OperatorError:
            pass
    return [
        Check(_tag("fsharp.restrict_lift", geom), exact_rt, {}, "identity, exact"),
        Check(_tag("fsharp.trace_lift", geom), trace_rt <= 1e-12, {"error": trace_rt}, "<= 1e-12"),
        Check(_tag("fsharp.Q_extrapolate", geom), q_rt <= 1e-10, {"error": q_rt}, "<= 1e-10"),
        Check(_tag("fsharp.u_plus_single_valued", geom), spread <= 1e-9,
              {"spread": spread, "groups": len(geom.multiplicity)}, "<= 1e-9"),
        Check(_tag("fsharp.rejects_multivalued", geom), rejects, {"groups": len(geom.multiplicity)},
              "restrict_sharp raises on non-F# data"),
    ], {}


SUITES = {
    s.name: s
    for s in (
        Suite("green", 40, 2, _green, summary="discrete Green identities on random extended fields"),
        Suite("minimization", 16, 2, _minimization, summary="single layers minimize energy for their trace"),
        Suite("spectrum", 16, 2, _spectrum, _spectrum_across, "self-adjointness and spectra of calA/calB/Ah"),
        Suite("identities", 32, 2, _identities, summary="operator and interface identities"),
        Suite("contraction", 16, 2, _contraction, summary="fixed-point rate vs spectral radius"),
        Suite("extension", 32, 3, _extension, _band_checks("extension", ("forward", "reverse"), 2.0),
              "extremal single-layer energy ratios"),
        Suite("poincare", 32, 3, _poincare, _band_checks("poincare", ("trace_zero", "mean_zero", "box_zero"), 2.0),
              "discrete Poincare constants"),
        Suite("norm2-bounded", 32, 3, _norm2,
              lambda label, res: _band_checks("norm2", ("norm2_sincosh", "norm2_x"), 1.2)(label, res)
              + _band_checks("norm2", ("flux_interior", "flux_weighted"), 2.0)(label, res),
              "boundary norm and flux sums of extended Shortley-Weller solutions"),
        Suite("fsharp", 16, 2, _fsharp, summary="lift/restrict, trace and quadratic round trips"),
    )
}


def suite_resolutions(suite: Suite, base_n=None) -> list:
    base = base_n or suite.base_n
    return [base * 2**k for k in range(suite.levels)]


def run_property_suite(name: str, config: StudyConfig | None = None, resolutions=None, domains=None) -> Report:
    """Run one named suite on every configured geometry and resolution."""
    if name not in SUITES:
        raise ConfigError(f"unknown suite {name!r}; known: {sorted(SUITES)}")
    config = config or StudyConfig()
    suite = SUITES[name]
    res = list(resolutions or suite_resolutions(suite, config.base_n))
    specs = domains or config.suite_domains
    report = Report(f"props:{name}", config.to_dict(), stats={"resolutions": res, "summary": suite.summary})
    jobs = [(di, spec, level, n) for di, spec in enumerate(specs) for level, n in enumerate(res)]

    def one(job):
        di, spec, level, n = job
        rng = np.random.default_rng([config.seed, di, n])
        try:
            geom = build_geometry(config.build_domain(spec), n, config.delta)
            checks, measures = suite.per_geometry(geom, rng, config, level)
            return job, checks, measures, None
        except FdbieError as exc:
            return job, [], {}, f"{spec.get('family')} n={n}: {type(exc).__name__}: {exc}"

    results = _map(one, jobs, config.single_thread)
    by_domain = {}
    for (di, spec, level, n), checks, measures, err in results:
        report.checks.extend(checks)
        if err:
            report.errors.append(err)
        by_domain.setdefault(di, []).append((n, measures))
        if measures:
            report.rows.append({"domain": spec.get("family"), "n": n, **measures})
    if suite.across is not None:
        for di, items in by_domain.items():
            if len(items) >= 2 and all(m for _, m in items):
                report.checks.extend(suite.across(specs[di].get("family"), items))
    return report


def run_spectrum(config: StudyConfig, n=None, out_dir=None) -> Report:
    """Spectra of calB, calA (congruence) and Ah (general) on the configured domain."""
    n = n or config.resolutions[0]
    geom = build_geometry(config.build_domain(), n, config.delta)
    checks, measures = _spectrum(geom, np.random.default_rng(config.seed), config, 0)
    report = Report("spectrum", config.to_dict(), checks=checks, stats={"n": n, **measures})
    if out_dir is not None:
        from .operators import export_csv

        Path(out_dir).mkdir(parents=True, exist_ok=True)
        for tag in ("calB", "Ah"):
            ev = spectrum(geom, tag, config.linear, config.cg_tol).eigenvalues
            export_csv(Path(out_dir) / f"eigenvalues_{tag}.csv", ev[:, None])
    return report


def run_geometry_dump(config: StudyConfig, n=None) -> tuple:
    """Build the geometry and return ``(report, json_text)``."""
    n = n or config.resolutions[0]
    geom = build_geometry(config.build_domain(), n, config.delta)
    report = Report("geom-dump", config.to_dict(), stats=geom.summary())
    return report, geom.to_json()


# -- acceptance -------------------------------------------------------------------------


def _suite_entry(name, label, suite, resolutions, domains=None, config=None) -> Check:
    rep = run_property_suite(suite, config or StudyConfig(), resolutions, domains)
    failed = [c.name for c in rep.checks if not c.passed] + rep.errors
    return Check(name, rep.passed, {"checks": len(rep.checks), "failed": failed}, label)


def _criterion_1():
    cfg = StudyConfig(resolutions=[32, 64, 128, 256])
    t0 = time.perf_counter()
    rep = run_convergence(cfg)
    secs = time.perf_counter() - t0
    orders = [r["order_max"] for r in rep.rows[-2:]]
    ok = rep.passed and secs <= 180
    return Check("criterion_1", ok, {"orders": orders, "errors": [r["err_max"] for r in rep.rows],
                                     "seconds": round(secs, 1)},
                 "circle, Re z^3, n=32..256: two finest max-norm orders in [1.7, 2.3], <= 180 s")


def _criterion_2():
    cfg = StudyConfig(solution={"kind": "polynomial", "name": "x2-y2"}, resolutions=[64], order_band=None,
                      max_error=1e-8)
    rep = run_convergence(cfg)
    return Check("criterion_2", rep.passed, {"err_max": rep.rows[0]["err_max"]}, "x^2 - y^2, n=64: error <= 1e-8")


def _criterion_3():
    return _suite_entry("criterion_3", "Green identities, 20 fields per side, circle and star, n=40: <= 1e-11",
                        "green", [40])


def _criterion_4():
    return _suite_entry("criterion_4", "calA - I - calB, jump pairing, interface energy <= 10 cg_tol, n=32",
                        "identities", [32])


def _criterion_5():
    return _suite_entry("criterion_5", "spectra at n=16, 32 circle and star; r_hat stable within 1.5",
                        "spectrum", [16, 32])


def _criterion_6():
    return _suite_entry("criterion_6", "fixed-point rate < 1 and within 0.15 of r_hat, n=32", "contraction", [32])


def _criterion_7():
    return _suite_entry("criterion_7", "single layers minimize energy, both sides", "minimization", [16, 32])


def _criterion_8():
    parts = [run_property_suite(s, StudyConfig(), [32, 64, 128]) for s in ("extension", "poincare", "norm2-bounded")]
    checks = [c for p in parts for c in p.checks]
    failed = [c.name for c in checks if not c.passed] + [e for p in parts for e in p.errors]
    worst = {}
    for c in checks:
        if "_band[" in c.name:
            key = c.name.split("[")[0]
            worst[key] = max(worst.get(key, 0.0), c.measured["ratio"])
    return Check("criterion_8", not failed, {"failed": failed, "worst_band_ratio": worst},
                 "C1, Poincare constants within factor 2, ||f||_2 within 20%, flux sums bounded (n=32,64,128)")


def _criterion_9():
    domains = [{"family": "circle"}, {"family": "star"}, {"family": "circle", "radius": math.sqrt(0.5)}]
    return _suite_entry("criterion_9", "Q o extrapolate <= 1e-10, restrict o lift exact, M o lift round-off",
                        "fsharp", [16, 32], domains)


def _criterion_10():
    cfg = StudyConfig()
    domain = cfg.build_domain()
    exact = cfg.build_solution(domain)
    fields = []
    for delta in (0.1, 0.3):
        geom = build_geometry(domain, 64, delta)
        rep = solve_dirichlet(geom, exact(geom.gamma0_points), cfg.solve_config(64, delta))
        fields.append(rep.u_plus.values[geom.plus_nodes])
    diff = float(np.max(np.abs(fields[0] - fields[1])))
    return Check("criterion_10", diff <= 10 * cfg.fp_tol, {"max_difference": diff},
                 "u+ for delta 0.1 vs 0.3 within 10 fp_tol")


def _criterion_11():
    cfg = StudyConfig(domain={"family": "sphere"}, solution={"kind": "inverse_distance", "x0": [0.0, 0.0, 1.5]},
                      resolutions=[16, 32], order_band=None, min_ratio=3.0)
    t0 = time.perf_counter()
    rep = run_convergence(cfg)
    secs = time.perf_counter() - t0
    return Check("criterion_11", rep.passed and secs <= 600,
                 {"errors": [r["err_max"] for r in rep.rows], "seconds": round(secs, 1)},
                 "sphere, 1/|x - x0|, n=16 -> 32: error ratio >= 3, <= 600 s")


ACCEPTANCE = {
    1: _criterion_1, 2: _criterion_2, 3: _criterion_3, 4: _criterion_4, 5: _criterion_5, 6: _criterion_6,
    7: _criterion_7, 8: _criterion_8, 9: _criterion_9, 10: _criterion_10, 11: _criterion_11,
}


def run_acceptance(which=None) -> Report:
    report = Report("acceptance", {"criteria": list(which or ACCEPTANCE)})
    for k in which or ACCEPTANCE:
        report.checks.append(ACCEPTANCE[k]())
    return report
