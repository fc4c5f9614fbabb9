"""Sparse solves on the embedded grid.

* single layers: discrete harmonic fields with a prescribed trace on the
  clamped boundary points, on either side;
* the interface problem: one Poisson solve on the whole box with a
  jump-corrected right-hand side, split into the two double-layer fields;
* Shortley-Weller: the classical irregular-stencil Dirichlet solve on the
  interior, and its quadratic extrapolation to the exterior endpoints.

Linear algebra is either ``"direct"`` (factorizations cached on the
geometry; the box Poisson problem uses a sine transform) or ``"cg"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigError, SolverError
from .fields import ExtendedField, differences, inner, laplacian_h, lift_from_trace, make_field
from .geometry import MINUS, PLUS, GridGeometry

DEFAULT_CG_TOL = 1e-11
LINEAR_METHODS = ("direct", "cg")


@dataclass
class SparseSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    tol: float = DEFAULT_CG_TOL
    max_iter: int | None = None
    iterations: int = field(default=0, init=False)
    residual: float = field(default=0.0, init=False)


def cg_solve(system: SparseSystem, x0=None) -> np.ndarray:
    """Unpreconditioned conjugate gradients to relative residual ``system.tol``."""
    A = sp.csr_matrix(system.matrix)
    b = np.asarray(system.rhs, dtype=float)
    nrm_b = np.linalg.norm(b)
    max_iter = system.max_iter or int(500 * np.sqrt(max(b.size, 1))) + 10
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if nrm_b == 0.0:
        system.iterations, system.residual = 0, 0.0
        return np.zeros_like(b)
    r = b - A @ x
    p = r.copy()
    rr = r @ r
    for k in range(1, max_iter + 1):
        if np.sqrt(rr) <= system.tol * nrm_b:
            system.iterations, system.residual = k - 1, np.sqrt(rr) / nrm_b
            return x
        Ap = A @ p
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = float(np.linalg.norm(b - A @ x) / nrm_b)
    system.iterations, system.residual = max_iter, res
    if res <= system.tol:
        return x
    raise SolverError(f"CG did not converge in {max_iter} iterations (residual {res:.3e})", max_iter, res)


class _Linear:
    """A fixed sparse matrix with a cached factorization or a CG fallback."""

    def __init__(self, matrix, method="direct", tol=DEFAULT_CG_TOL):
        if method not in LINEAR_METHODS:
            raise ConfigError(f"linear method must be one of {LINEAR_METHODS}, got {method!r}")
        self.matrix = sp.csc_matrix(matrix)
        self.method = method
        self.tol = tol
        self._lu = splu(self.matrix) if method == "direct" else None
        self.last_iterations = 0

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self._lu is not None:
            return self._lu.solve(rhs)
        if rhs.ndim == 1:
            sysm = SparseSystem(self.matrix, rhs, self.tol)
            x = cg_solve(sysm)
            self.last_iterations = sysm.iterations
            return x
        return np.column_stack([self.solve(rhs[:, j]) for j in range(rhs.shape[1])])


def _cached(geom, key, build):
    if key not in geom.cache:
        geom.cache[key] = build()
    return geom.cache[key]


def _local_index(geom, nodes):
    loc = np.full(geom.n_nodes, -1)
    loc[nodes] = np.arange(nodes.size)
    return loc


# -- single layers ------------------------------------------------------------


def _single_layer_parts(geom: GridGeometry, side: str):
    """Energy matrix over own-side unknowns and the map from trace data to rhs.

    With the exterior values eliminated through the trace, the Dirichlet
    energy is ``h^(d-2) [sum_own (v_i - v_j)^2 + sum_cut (psi - v_p)^2 / w]``
    where ``w`` is the own-side fraction of the cut interval.
    """
    if side == "plus":
        nodes, own_kind, own_end, w = geom.plus_nodes, PLUS, geom.plus_node, geom.xi
    elif side == "minus":
        nodes, own_kind, own_end, w = geom.minus_nodes, MINUS, geom.minus_node, 1.0 - geom.xi
    else:
        raise ConfigError(f"unknown side {side!r}")
    loc = _local_index(geom, nodes)
    sel = geom.int_kind == own_kind
    a, b = loc[geom.int_lo[sel]], loc[geom.int_hi[sel]]
    # box-boundary endpoints (a or b == -1) are pinned to zero: diagonal only
    diag = np.bincount(a[a >= 0], minlength=nodes.size) + np.bincount(b[b >= 0], minlength=nodes.size)
    both = (a >= 0) & (b >= 0)
    pc = loc[own_end]
    diag = diag.astype(float) + np.bincount(pc, 1.0 / w, minlength=nodes.size)
    off = sp.coo_matrix((-np.ones(both.sum()), (a[both], b[both])), shape=(nodes.size, nodes.size))
    K = sp.diags(diag) + off + off.T
    B = sp.csr_matrix((1.0 / w, (pc, np.arange(geom.n_cut))), shape=(nodes.size, geom.n_cut))
    return nodes, K.tocsc(), B


def _single_layer_solver(geom, side, method, cg_tol):
    def build():
        nodes, K, B = _single_layer_parts(geom, side)
        return nodes, _Linear(K, method, cg_tol), B

    return _cached(geom, ("single", side, method, cg_tol), build)


def single_layer_values(geom, psi, side, method="direct", cg_tol=DEFAULT_CG_TOL):
    """Own-side nodal values of the single layers for one or several traces.

    ``psi`` has shape ``(n_cut,)`` or ``(n_cut, k)``; returns full-grid arrays.
    """
    nodes, lin, B = _single_layer_solver(geom, side, method, cg_tol)
    x = lin.solve(B @ psi)
    out = np.zeros((geom.n_nodes,) + np.shape(psi)[1:])
    out[nodes] = x
    return out


def solve_single_layer(geom: GridGeometry, psi, side: str, method="direct", cg_tol=DEFAULT_CG_TOL) -> ExtendedField:
    """Discrete harmonic field on ``side`` whose trace is ``psi``.

    The trace is enforced exactly by eliminating the extension values; the
    strong-form residual ``max |h^2 Lap v|`` is reported in ``info``.
    """
    psi = np.asarray(psi, dtype=float)
    vals = single_layer_values(geom, psi, side, method, cg_tol)
    v = lift_from_trace(geom, vals, psi, side)
    v.info = {"strong_residual": float(np.max(np.abs(laplacian_h(geom, v)), initial=0.0)) * geom.h**2}
    return v


# -- interface problem --------------------------------------------------------


def _box_laplacian(geom):
    m = geom.n - 1
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    eye = sp.identity(m)
    K = sp.csr_matrix((m**geom.dim, m**geom.dim))
    for nu in range(geom.dim):
        mats = [eye] * geom.dim
        mats[nu] = T
        term = mats[0]
        for M in mats[1:]:
            term = sp.kron(term, M)
        K = K + term
    return K.tocsr()


def _interior_slices(geom):
    return (slice(1, geom.n),) * geom.dim


def _box_poisson(geom, b, method, cg_tol):
    """Solve ``-h^2 Lap u = b`` with u = 0 on the box boundary."""
    n, d = geom.n, geom.dim
    shape = geom.grid.shape
    rhs = np.asarray(b, dtype=float).reshape(shape + np.shape(b)[1:])[_interior_slices(geom)]
    if method == "direct":
        axes = tuple(range(d))
        k = np.arange(1, n)
        lam1 = 2.0 - 2.0 * np.cos(np.pi * k / n)
        lam = np.zeros((n - 1,) * d)
        for nu in range(d):
            lam = lam + lam1.reshape([-1 if j == nu else 1 for j in range(d)])
        lam = lam.reshape(lam.shape + (1,) * (rhs.ndim - d))
        hat = scipy.fft.dstn(rhs, type=1, axes=axes, norm="ortho")
        sol = scipy.fft.idstn(hat / lam, type=1, axes=axes, norm="ortho")
    elif method == "cg":
        lin = _cached(geom, ("box", method, cg_tol), lambda: _Linear(_box_laplacian(geom), "cg", cg_tol))
        flat = rhs.reshape(((n - 1) ** d,) + rhs.shape[d:])
        sol = lin.solve(flat).reshape(rhs.shape)
    else:
        raise ConfigError(f"linear method must be one of {LINEAR_METHODS}, got {method!r}")
    out = np.zeros(shape + rhs.shape[d:])
    out[_interior_slices(geom)] = sol
    return out.reshape((geom.n_nodes,) + rhs.shape[d:])


def interface_grid_function(geom, phi, method="direct", cg_tol=DEFAULT_CG_TOL):
    """Single-valued box function ``u^h`` for jump data ``phi`` (shape ``(n_cut,)`` or ``(n_cut, k)``).

    Adding ``phi`` at exterior endpoints must leave the interior Laplacian
    zero, and subtracting it at interior endpoints the exterior one:
    ``-h^2 Lap u^h = +phi`` summed at interior endpoints and ``-phi`` at
    exterior endpoints of cut intervals.
    """
    phi = np.asarray(phi, dtype=float)
    b = np.zeros((geom.n_nodes,) + phi.shape[1:])
    np.add.at(b, geom.plus_node, phi)
    np.add.at(b, geom.minus_node, -phi)
    return _box_poisson(geom, b, method, cg_tol)


def solve_interface(geom: GridGeometry, phi, method="direct", cg_tol=DEFAULT_CG_TOL):
    """Double-layer pair ``(u_plus, u_minus)`` with trace jump ``phi`` and continuous differences."""
    phi = np.asarray(phi, dtype=float)
    uh = interface_grid_function(geom, phi, method, cg_tol)
    u_plus = make_field(geom, "plus", uh, uh[geom.minus_node] + phi)
    u_minus = make_field(geom, "minus", uh, uh[geom.plus_node] - phi)
    return u_plus, u_minus


# -- Shortley-Weller ----------------------------------------------------------


def _lagrange3(x0, x1, x2, y0, y1, y2, x):
    """Value at ``x`` of the quadratic through ``(x_k, y_k)``."""
    l0 = (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
    l1 = (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
    l2 = (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
    return l0 * y0 + l1 * y1 + l2 * y2


def _second_derivative_weights(x0, x2):
    """Weights of the quadratic's second derivative for nodes ``(x0, 0, x2)``."""
    w0 = 2.0 / (x0 * (x0 - x2))
    w1 = 2.0 / (x0 * x2)
    w2 = 2.0 / (x2 * (x2 - x0))
    return w0, w1, w2


def _arm_table(geom):
    def build():
        arm = np.full((geom.n_nodes, geom.dim, 2), -1)
        cid = np.arange(geom.n_cut)
        arm[geom.cut_lo, geom.cut_axis, 1] = cid
        arm[geom.cut_hi, geom.cut_axis, 0] = cid
        return arm

    return _cached(geom, "arm", build)


def _sw_parts(geom):
    """Negated Shortley-Weller matrix over interior nodes and the rhs map from cut data.

    Along each axis the second difference at ``p`` is that of the quadratic
    through ``p`` and its two neighbours on the axis, a neighbour across the
    interface being replaced by the crossing point and its boundary value.
    """
    nodes = geom.plus_nodes
    loc = _local_index(geom, nodes)
    arm = _arm_table(geom)
    strides = geom.grid.strides
    n_p = nodes.size
    rows, cols, vals = [], [], []
    brow, bcol, bval = [], [], []
    for nu in range(geom.dim):
        cm, cp = arm[nodes, nu, 0], arm[nodes, nu, 1]
        x0 = np.where(cm >= 0, -geom.s_plus[cm], -1.0)
        x2 = np.where(cp >= 0, geom.s_plus[cp], 1.0)
        w0, w1, w2 = _second_derivative_weights(x0, x2)
        me = np.arange(n_p)
        rows.append(me)
        cols.append(me)
        vals.append(w1)
        for cut_ids, wt, off in ((cm, w0, -strides[nu]), (cp, w2, strides[nu])):
            free = cut_ids < 0
            rows.append(me[free])
            cols.append(loc[nodes[free] + off])
            vals.append(wt[free])
            brow.append(me[~free])
            bcol.append(cut_ids[~free])
            bval.append(-wt[~free])
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    if np.any(cols < 0):
        raise SolverError("Shortley-Weller stencil reaches an unclassified node")
    A = sp.coo_matrix((-vals, (rows, cols)), shape=(n_p, n_p)).tocsc()
    B = sp.coo_matrix(
        (-np.concatenate(bval), (np.concatenate(brow), np.concatenate(bcol))), shape=(n_p, geom.n_cut)
    ).tocsr()
    return nodes, A, B


def _normal_equations_solve(A, b, tol):
    At = A.T.tocsr()
    sysm = SparseSystem(At @ A, At @ b, tol)
    return cg_solve(sysm)


def shortley_weller(geom: GridGeometry, f, method="direct", cg_tol=DEFAULT_CG_TOL) -> np.ndarray:
    """Shortley-Weller solution on interior nodes for crossing-point data ``f``.

    ``f`` is indexed by the distinct crossing points (``n_gamma0``).  Returns a
    full-grid array (zero outside).  ``method="cg"`` runs CG on the normal
    equations.
    """
    f = np.asarray(f, dtype=float)
    f_cut = f[geom.gamma0_of_cut]

    def build():
        nodes, A, B = _sw_parts(geom)
        lu = splu(A) if method == "direct" else None
        return nodes, A, B, lu

    nodes, A, B, lu = _cached(geom, ("sw", method), build)
    rhs = B @ f_cut
    if lu is not None:
        x = lu.solve(rhs)
    elif method == "cg":
        x = _normal_equations_solve(A, rhs, cg_tol)
    else:
        raise ConfigError(f"linear method must be one of {LINEAR_METHODS}, got {method!r}")
    out = np.zeros((geom.n_nodes,) + f.shape[1:])
    out[nodes] = x
    return out


def quadratic_extrapolate(geom: GridGeometry, w, f) -> ExtendedField:
    """Extend interior values to exterior endpoints by quadratic extrapolation.

    Coordinates run along the cut interval's axis from its interior endpoint
    ``p`` toward the exterior endpoint (at 1), in units of h.  Usually the
    quadratic passes through ``(-1, w)``, ``(0, w_p)``, ``(s, f)``; when the
    opposite arm at ``p`` is cut too, ``(-1, w)`` is replaced by the other
    crossing ``(-s', f')``.
    """
    w = np.asarray(w, dtype=float)
    f_cut = np.asarray(f, dtype=float)[geom.gamma0_of_cut]
    opp = geom.opposite_cut
    dbl = opp >= 0
    safe_opp = np.where(dbl, opp, 0)
    x0 = np.where(dbl, -geom.s_plus[safe_opp], -1.0)
    y0 = np.where(dbl, f_cut[safe_opp], w[geom.back_node])
    ext = _lagrange3(x0, 0.0, geom.s_plus, y0, w[geom.plus_node], f_cut, 1.0)
    return make_field(geom, "plus", w, ext)


def interface_energy_residual(geom: GridGeometry, phi, u_plus: ExtendedField, u_minus: ExtendedField) -> float:
    """Relative defect of ``<u+,u+>+ + <u-,u->- + sum (D u) phi (D chi) h^d = 0``."""
    e_plus, e_minus = inner(geom, u_plus, u_plus), inner(geom, u_minus, u_minus)
    du = differences(geom, u_plus)[geom.cut_interval]
    jump_term = float(np.dot(du * np.asarray(phi, dtype=float), geom.dchi) * geom.h**geom.dim)
    return abs(e_plus + e_minus + jump_term) / max(1.0, e_plus + e_minus + abs(jump_term))
