"""End-to-end Dirichlet solve through the boundary density equation ``Ah phi = f``."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigError, SolverError
from .fields import ExtendedField
from .geometry import DEFAULT_DELTA, GridGeometry
from .operators import DENSE_CAP, apply_Ah, assemble_dense
from .solvers import DEFAULT_CG_TOL, LINEAR_METHODS

METHODS = ("gmres", "fixed_point", "dense_direct")


@dataclass
class SolveConfig:
    """Outer-solve settings.

    ``fixed_point`` is unit-step Richardson ``phi += f - Ah phi``;
    ``gmres`` is a Krylov solve of the same equation; ``dense_direct``
    assembles ``Ah`` and LU-factorizes it.  All stop on the max-norm
    boundary residual ``fp_tol``.
    """

    method: str = "gmres"
    fp_tol: float = 1e-10
    fp_max_iters: int = 200
    cg_tol: float = DEFAULT_CG_TOL
    delta: float = DEFAULT_DELTA
    n: int = 64
    linear: str = "direct"
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.linear not in LINEAR_METHODS:
            raise ConfigError(f"linear must be one of {LINEAR_METHODS}, got {self.linear!r}")
        if self.fp_tol <= 0 or self.cg_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.fp_tol < 10 * self.cg_tol:
            raise ConfigError("fp_tol must be at least 10*cg_tol")
        if self.fp_max_iters < 1:
            raise ConfigError("fp_max_iters must be positive")


@dataclass
class SolveReport:
    phi: np.ndarray
    u_plus: ExtendedField
    residuals: list
    method: str
    converged: bool
    contraction: float | None = None
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)
    errors: dict | None = None

    @property
    def iterations(self) -> int:
        """Applications of ``Ah`` (for fixed_point, one per recorded residual)."""
        return int(self.stats.get("operator_applications", len(self.residuals)))

    @property
    def monotone(self) -> bool:
        """Residuals decrease after the first three iterations (diagnostic only)."""
        r = self.residuals[3:]
        return all(b <= a for a, b in zip(r, r[1:]))

    def summary(self) -> dict:
        out = {
            "method": self.method,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.residuals[-1] if self.residuals else None,
            "contraction": self.contraction,
            "monotone_after_3": self.monotone,
            "seconds": self.seconds,
        }
        out.update(self.stats)
        if self.errors is not None:
            out.update(self.errors)
        return out


def _fixed_point(geom, f, cfg):
    phi = f.copy()
    residuals = []
    while True:
        af, u_plus = apply_Ah(geom, phi, cfg.linear, cfg.cg_tol, return_field=True)
        r = f - af
        res = float(np.max(np.abs(r), initial=0.0))
        residuals.append(res)
        if res <= cfg.fp_tol:
            return phi, u_plus, residuals, {"operator_applications": len(residuals)}
        if len(residuals) >= cfg.fp_max_iters or not np.isfinite(res):
            raise SolverError(
                f"fixed-point iteration stalled at residual {res:.3e} after {len(residuals)} iterations",
                iterations=len(residuals),
                residual=res,
                trace=residuals,
            )
        phi = phi + r


def _gmres(geom, f, cfg):
    """Restarted GMRES; the trace holds the max-norm residual after each cycle."""
    n0 = geom.n_gamma0
    count = [0]

    def matvec(x):
        count[0] += 1
        return apply_Ah(geom, x, cfg.linear, cfg.cg_tol)

    op = LinearOperator((n0, n0), matvec=matvec, dtype=float)
    phi = f.copy()
    residuals = []
    scale = max(float(np.linalg.norm(f)), 1.0)
    while True:
        af, u_plus = apply_Ah(geom, phi, cfg.linear, cfg.cg_tol, return_field=True)
        count[0] += 1
        res = float(np.max(np.abs(f - af), initial=0.0))
        residuals.append(res)
        if res <= cfg.fp_tol:
            return phi, u_plus, residuals, {"operator_applications": count[0]}
        budget = cfg.fp_max_iters - count[0]
        if budget < 1 or len(residuals) > 10:
            break
        phi, _ = gmres(op, f, x0=phi, rtol=0.01 * cfg.fp_tol / scale, atol=0.0,
                       restart=min(budget, n0), maxiter=1)
    raise SolverError(
        f"GMRES did not reach {cfg.fp_tol:.1e} within {count[0]} operator applications "
        f"(residual {residuals[-1]:.3e})",
        iterations=count[0],
        residual=residuals[-1],
        trace=residuals,
    )


def _dense_direct(geom, f, cfg):
    if geom.n_gamma0 > cfg.dense_cap:
        raise ConfigError(f"{geom.n_gamma0} boundary unknowns exceed the dense cap {cfg.dense_cap}")
    A = assemble_dense(geom, "Ah", cfg.linear, cfg.cg_tol, cap=cfg.dense_cap)
    phi = lu_solve(lu_factor(A), f)
    af, u_plus = apply_Ah(geom, phi, cfg.linear, cfg.cg_tol, return_field=True)
    res = float(np.max(np.abs(f - af), initial=0.0))
    if res > cfg.fp_tol:
        raise SolverError(f"dense solve residual {res:.3e} exceeds {cfg.fp_tol:.1e}", 1, res, [res])
    return phi, u_plus, [res], {"operator_applications": geom.n_gamma0 + 1}


def solve_dirichlet(geom: GridGeometry, f, config: SolveConfig | None = None, exact=None) -> SolveReport:
    """Find the density ``phi`` with ``Ah phi = f`` and the interior solution.

    ``f`` holds boundary values at the crossing points (``geom.n_gamma0``).
    The interior values of the returned field are the Shortley-Weller
    solution for data ``Ah phi``.  When ``exact`` (a callable on points) is
    given, node-wise errors on the interior are attached.
    """
    cfg = config or SolveConfig()
    f = np.asarray(f, dtype=float)
    if f.shape != (geom.n_gamma0,):
        raise ConfigError(f"boundary data must have shape ({geom.n_gamma0},), got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ConfigError("boundary data must be finite")
    t0 = time.perf_counter()
    run = {"fixed_point": _fixed_point, "gmres": _gmres, "dense_direct": _dense_direct}[cfg.method]
    phi, u_plus, residuals, extra = run(geom, f, cfg)
    report = SolveReport(
        phi=phi,
        u_plus=u_plus,
        residuals=residuals,
        method=cfg.method,
        converged=True,
        seconds=time.perf_counter() - t0,
        stats={"n": geom.n, "n_gamma0": geom.n_gamma0, "n_plus": int(geom.chi.sum()), **extra},
    )
    if cfg.method == "fixed_point":
        report.contraction = measure_contraction(report)
    if exact is not None:
        report.errors = nodal_errors(geom, u_plus, exact)
    return report


def measure_contraction(report_or_residuals, window: int = 5) -> float | None:
    """Geometric-mean residual ratio over the last ``window`` iterations.

    Returns None when fewer than ``window + 1`` residuals exist or the
    residual has already hit zero.
    """
    r = getattr(report_or_residuals, "residuals", report_or_residuals)
    r = list(r)
    if len(r) < window + 1 or r[-window - 1] <= 0 or r[-1] <= 0:
        return None
    return float((r[-1] / r[-window - 1]) ** (1.0 / window))


def nodal_errors(geom: GridGeometry, u_plus: ExtendedField, exact) -> dict:
    nodes = geom.plus_nodes
    err = u_plus.values[nodes] - exact(geom.grid.coords(nodes))
    return {
        "err_max": float(np.max(np.abs(err))),
        "err_l2": float(np.sqrt(np.sum(err**2) * geom.h**geom.dim)),
    }


def config_dict(cfg: SolveConfig) -> dict:
    return asdict(cfg)
