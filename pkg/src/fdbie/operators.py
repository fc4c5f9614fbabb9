"""Boundary operators built from the layer solves.

``calA`` and ``calB`` act on functions on the clamped points (one value per
cut interval) and return the interior / exterior traces of the double
layer.  ``Ah`` acts on functions on the distinct crossing points: lift,
double layer, quadratic interpolation back to the crossings.  The
single-layer inner product gives these spaces their Hilbert structure;
``calB`` is self-adjoint and nonpositive in it, which :func:`spectrum`
exploits through a Cholesky congruence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, OperatorError
from .fields import ExtendedField, differences, inner, interval_weights, trace_M
from .geometry import PLUS, GridGeometry
from .solvers import (
    DEFAULT_CG_TOL,
    _lagrange3,
    _single_layer_parts,
    interface_grid_function,
    quadratic_extrapolate,
    shortley_weller,
    single_layer_values,
    solve_interface,
    solve_single_layer,
)

FSHARP_RTOL = 1e-9
DENSE_CAP = 2000
TAGS = ("calA", "calB", "Ah", "Splus", "Sminus")


def _cols(a, ndim):
    return a.reshape(a.shape + (1,) * (ndim - 1))


def apply_calA(geom: GridGeometry, phi, method="direct", cg_tol=DEFAULT_CG_TOL) -> np.ndarray:
    u_plus, _ = solve_interface(geom, phi, method, cg_tol)
    return trace_M(geom, u_plus)


def apply_calB(geom: GridGeometry, phi, method="direct", cg_tol=DEFAULT_CG_TOL) -> np.ndarray:
    _, u_minus = solve_interface(geom, phi, method, cg_tol)
    return trace_M(geom, u_minus)


def single_layers(geom, psi, method="direct", cg_tol=DEFAULT_CG_TOL):
    return (
        solve_single_layer(geom, psi, "plus", method, cg_tol),
        solve_single_layer(geom, psi, "minus", method, cg_tol),
    )


def sl_inner(geom: GridGeometry, psi, zeta, method="direct", cg_tol=DEFAULT_CG_TOL) -> float:
    """Sum of the interior and exterior Dirichlet inner products of the single layers."""
    vp, vm = single_layers(geom, psi, method, cg_tol)
    if zeta is psi:
        zp, zm = vp, vm
    else:
        zp, zm = single_layers(geom, zeta, method, cg_tol)
    return inner(geom, vp, zp) + inner(geom, vm, zm)


def sl_norm(geom: GridGeometry, psi, method="direct", cg_tol=DEFAULT_CG_TOL) -> float:
    return float(np.sqrt(max(sl_inner(geom, psi, psi, method, cg_tol), 0.0)))


# -- crossing points vs. clamped points -----------------------------------------


def tilde_lift(geom: GridGeometry, phi0) -> np.ndarray:
    """Copy crossing-point values onto every cut interval sharing the point."""
    return np.asarray(phi0, dtype=float)[geom.gamma0_of_cut]


def _first_cut_of_gamma0(geom):
    key = "first_cut"
    if key not in geom.cache:
        first = np.empty(geom.n_gamma0, dtype=np.int64)
        first[geom.gamma0_of_cut[::-1]] = np.arange(geom.n_cut)[::-1]
        geom.cache[key] = first
    return geom.cache[key]


def fsharp_spread(geom: GridGeometry, psi) -> tuple[float, int]:
    """Largest relative spread of ``psi`` over a multiple-cut-point group, and that group's node."""
    worst, node = 0.0, -1
    for q, cs in geom.multiplicity.items():
        vals = np.asarray(psi)[cs]
        spread = float(np.max(np.abs(vals - vals[0]))) / max(1.0, float(np.max(np.abs(vals))))
        if spread > worst:
            worst, node = spread, q
    return worst, node


def restrict_sharp(geom: GridGeometry, psi, rtol=FSHARP_RTOL) -> np.ndarray:
    """Inverse of :func:`tilde_lift` on functions constant over each shared crossing."""
    spread, node = fsharp_spread(geom, psi)
    if spread > rtol:
        raise OperatorError(
            f"values differ across the intervals sharing grid node {node} "
            f"(relative spread {spread:.3e} > {rtol:.1e})"
        )
    return np.asarray(psi, dtype=float)[_first_cut_of_gamma0(geom)]


def _q_values(geom, values, ext):
    """Quadratic interpolation to each cut interval's crossing (per cut)."""
    nd = np.ndim(values)
    opp = geom.opposite_cut
    dbl = opp >= 0
    safe = np.where(dbl, opp, 0)
    y0 = np.where(_cols(dbl, nd), ext[safe], values[geom.back_node])
    s = _cols(geom.s_plus, nd)
    q = _lagrange3(-1.0, 0.0, 1.0, y0, values[geom.plus_node], ext, s)
    # crossings on grid nodes take the node value itself
    return np.where(_cols(geom.s_plus == 1.0, nd), ext, q)


def interp_Q(geom: GridGeometry, u: ExtendedField, rtol=FSHARP_RTOL) -> np.ndarray:
    """Values at the crossing points of the quadratics through three collinear nodes.

    ``u`` must be single-valued at grid nodes shared by several cut intervals.
    """
    if u.side != "plus":
        raise OperatorError("quadratic interpolation needs an interior (plus) field")
    spread, node = fsharp_spread(geom, u.ext)
    if spread > rtol:
        raise OperatorError(
            f"extended field is multi-valued at grid node {node} (relative spread {spread:.3e})"
        )
    return _q_values(geom, u.values, u.ext)[_first_cut_of_gamma0(geom)]


def apply_Ah(geom: GridGeometry, phi0, method="direct", cg_tol=DEFAULT_CG_TOL, return_field=False):
    """``Q u+`` where ``u+`` is the interior double layer of the lifted density."""
    phi = tilde_lift(geom, phi0)
    u_plus, _ = solve_interface(geom, phi, method, cg_tol)
    out = interp_Q(geom, u_plus)
    return (out, u_plus) if return_field else out


# -- dense assembly and spectra ---------------------------------------------------


def _check_cap(geom, cap):
    size = max(geom.n_cut, geom.n_gamma0)
    if size > cap:
        raise ConfigError(f"{size} boundary unknowns exceed the dense cap {cap}")


def assemble_dense(geom: GridGeometry, tag: str, method="direct", cg_tol=DEFAULT_CG_TOL, cap=DENSE_CAP):
    """Column ``j`` is the operator applied to the ``j``-th unit vector.

    For ``Splus`` / ``Sminus`` the columns are own-side nodal values of the
    single layers (rows ordered as the own-side unknowns).
    """
    _check_cap(geom, cap)
    if tag in ("calA", "calB"):
        eye = np.eye(geom.n_cut)
        uh = interface_grid_function(geom, eye, method, cg_tol)
        if tag == "calA":
            ext = uh[geom.minus_node] + eye
            return _cols(1.0 - geom.xi, 2) * uh[geom.plus_node] + _cols(geom.xi, 2) * ext
        ext = uh[geom.plus_node] - eye
        return _cols(1.0 - geom.xi, 2) * ext + _cols(geom.xi, 2) * uh[geom.minus_node]
    if tag == "Ah":
        lift = np.eye(geom.n_gamma0)[geom.gamma0_of_cut]
        uh = interface_grid_function(geom, lift, method, cg_tol)
        ext = uh[geom.minus_node] + lift
        return _q_values(geom, uh, ext)[_first_cut_of_gamma0(geom)]
    if tag in ("Splus", "Sminus"):
        side = "plus" if tag == "Splus" else "minus"
        vals = single_layer_values(geom, np.eye(geom.n_cut), side, method, cg_tol)
        nodes = geom.plus_nodes if side == "plus" else geom.minus_nodes
        return vals[nodes]
    raise ConfigError(f"unknown operator tag {tag!r}; known: {TAGS}")


def assemble_gram_parts(geom: GridGeometry, method="direct", cg_tol=DEFAULT_CG_TOL, cap=DENSE_CAP):
    """Interior and exterior parts of the single-layer Gram matrix.

    Each is the Schur complement ``h^(d-2) (W^-1 - B^T K^-1 B)`` of the
    eliminated energy, i.e. the Dirichlet energy of the single layers.
    """
    _check_cap(geom, cap)
    parts = []
    for side in ("plus", "minus"):
        nodes, K, B = _single_layer_parts(geom, side)
        w = geom.xi if side == "plus" else 1.0 - geom.xi
        V = single_layer_values(geom, np.eye(geom.n_cut), side, method, cg_tol)[nodes]
        G = np.diag(1.0 / w) - (B.T @ V)
        G = 0.5 * (G + G.T) * geom.h ** (geom.dim - 2)
        parts.append(G)
    return parts[0], parts[1]


def assemble_gram(geom: GridGeometry, method="direct", cg_tol=DEFAULT_CG_TOL, cap=DENSE_CAP) -> np.ndarray:
    gp, gm = assemble_gram_parts(geom, method, cg_tol, cap)
    return gp + gm


@dataclass
class Spectrum:
    tag: str
    eigenvalues: np.ndarray
    r_hat: float
    asymmetry: float  # ||G M - M^T G|| / ||G M||
    imag_max: float = 0.0

    def as_dict(self) -> dict:
        return {
            "tag": self.tag,
            "r_hat": self.r_hat,
            "asymmetry": self.asymmetry,
            "eig_min": float(self.eigenvalues.min()),
            "eig_max": float(self.eigenvalues.max()),
            "n": int(self.eigenvalues.size),
        }


def _congruence_eigs(G, M):
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise OperatorError(f"single-layer Gram matrix is not positive definite: {exc}") from None
    GM = G @ M
    asym = float(np.linalg.norm(GM - GM.T) / np.linalg.norm(GM)) if np.any(GM) else 0.0
    Y = sla.solve_triangular(L, GM, lower=True)
    C = sla.solve_triangular(L, Y.T, lower=True).T
    return np.linalg.eigvalsh(0.5 * (C + C.T)), asym


def spectrum(geom: GridGeometry, tag: str = "calB", method="direct", cg_tol=DEFAULT_CG_TOL,
             gram=None, dense=None) -> Spectrum:
    """Eigenvalues of ``calB`` or ``calA`` via the Gram-matrix congruence.

    ``r_hat`` is ``-min eig(calB)`` in both cases.  For ``Ah`` (not
    self-adjoint in any known inner product) a general eigensolver is used
    and ``imag_max`` records the largest imaginary part.
    """
    if tag == "Ah":
        M = assemble_dense(geom, "Ah", method, cg_tol) if dense is None else dense
        ev = np.linalg.eigvals(M)
        order = np.argsort(ev.real)
        ev = ev[order]
        return Spectrum("Ah", ev.real, float(1.0 - ev.real.min()), float("nan"), float(np.abs(ev.imag).max()))
    if tag not in ("calA", "calB"):
        raise ConfigError(f"spectrum available for calA, calB, Ah; got {tag!r}")
    G = assemble_gram(geom, method, cg_tol) if gram is None else gram
    M = assemble_dense(geom, tag, method, cg_tol) if dense is None else dense
    ev, asym = _congruence_eigs(G, M)
    r_hat = float(-ev.min()) if tag == "calB" else float(1.0 - ev.min())
    return Spectrum(tag, ev, r_hat, asym)


# -- norms --------------------------------------------------------------------------


def norm1(geom: GridGeometry, phi0, method="direct", cg_tol=DEFAULT_CG_TOL) -> float:
    return sl_norm(geom, tilde_lift(geom, phi0), method, cg_tol)


def extended_sw(geom: GridGeometry, f0, method="direct", cg_tol=DEFAULT_CG_TOL) -> ExtendedField:
    """Shortley-Weller solution extended to the exterior endpoints."""
    w = shortley_weller(geom, f0, method, cg_tol)
    return quadratic_extrapolate(geom, w, f0)


def norm2(geom: GridGeometry, f0, method="direct", cg_tol=DEFAULT_CG_TOL) -> float:
    w = extended_sw(geom, f0, method, cg_tol)
    return sl_norm(geom, trace_M(geom, w), method, cg_tol)


def sw_flux_sums(geom: GridGeometry, f0, method="direct", cg_tol=DEFAULT_CG_TOL) -> tuple[float, float]:
    """``sum over uncut interior intervals (D w)^2 h^d`` and ``<w, w>+`` for the extended SW solution."""
    w = extended_sw(geom, f0, method, cg_tol)
    d = differences(geom, w)
    hd = geom.h**geom.dim
    interior = float(np.sum(d[geom.int_kind == PLUS] ** 2) * hd)
    full = float(np.dot(d * d, interval_weights(geom, "plus")) * hd)
    return interior, full


# -- export -------------------------------------------------------------------------


class OperatorHandle:
    """Matrix-free application of one operator, with an optional dense cache."""

    def __init__(self, geom: GridGeometry, tag: str, method="direct", cg_tol=DEFAULT_CG_TOL):
        if tag not in TAGS:
            raise ConfigError(f"unknown operator tag {tag!r}; known: {TAGS}")
        self.geom, self.tag, self.method, self.cg_tol = geom, tag, method, cg_tol
        self._dense = None

    def apply(self, x):
        g, m, t = self.geom, self.method, self.cg_tol
        if self.tag == "calA":
            return apply_calA(g, x, m, t)
        if self.tag == "calB":
            return apply_calB(g, x, m, t)
        if self.tag == "Ah":
            return apply_Ah(g, x, m, t)
        return solve_single_layer(g, x, "plus" if self.tag == "Splus" else "minus", m, t)

    __call__ = apply

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = assemble_dense(self.geom, self.tag, self.method, self.cg_tol)
        return self._dense


def export_csv(path, matrix) -> None:
    """Row-major CSV with 17 significant digits."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in a:
            writer.writerow([f"{x:.17g}" for x in row])
