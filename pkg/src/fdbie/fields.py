"""Discrete calculus on extended grid functions.

An :class:`ExtendedField` on the ``plus`` side holds values on interior grid
points together with one extra value per cut interval at that interval's
exterior endpoint; two cut intervals sharing an exterior endpoint may carry
different values there.  ``minus`` fields are the mirror image and vanish
on the box boundary.

Boundary functions are plain 1-D arrays: length ``geom.n_cut`` when indexed
by the clamped points (one per cut interval) and ``geom.n_gamma0`` when
indexed by the distinct crossing points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FieldError
from .geometry import CUT, MINUS, PLUS, GridGeometry

SIDES = ("plus", "minus")


@dataclass
class ExtendedField:
    side: str
    values: np.ndarray  # full-grid array; entries off this side are ignored
    ext: np.ndarray  # one value per cut interval, at the opposite endpoint

    def __post_init__(self):
        if self.side not in SIDES:
            raise FieldError(f"side must be one of {SIDES}, got {self.side!r}")


def _check(geom: GridGeometry, u: ExtendedField):
    if u.values.shape[0] != geom.n_nodes or u.ext.shape[0] != geom.n_cut:
        raise FieldError(
            f"field shape ({u.values.shape[0]}, {u.ext.shape[0]}) does not match "
            f"geometry ({geom.n_nodes}, {geom.n_cut})"
        )


def own_mask(geom: GridGeometry, side: str) -> np.ndarray:
    """Grid points carrying own-side values (exterior includes the box boundary)."""
    return geom.chi.copy() if side == "plus" else ~geom.chi


def make_field(geom: GridGeometry, side: str, values=None, ext=None) -> ExtendedField:
    """Zero-filled field, optionally seeded with values that are masked to the side."""
    v = np.zeros(geom.n_nodes) if values is None else np.array(values, dtype=float)
    v[~own_mask(geom, side)] = 0.0
    if side == "minus":
        v[geom.on_box] = 0.0
    e = np.zeros(geom.n_cut) if ext is None else np.array(ext, dtype=float)
    return ExtendedField(side, v, e)


def sample_field(geom: GridGeometry, side: str, func) -> ExtendedField:
    """Sample ``func`` at own-side nodes and at the opposite endpoints of cut intervals."""
    x = geom.grid.all_coords()
    vals = func(x)
    far = geom.minus_node if side == "plus" else geom.plus_node
    return make_field(geom, side, vals, vals[far])


def random_field(geom: GridGeometry, side: str, rng: np.random.Generator) -> ExtendedField:
    return make_field(geom, side, rng.uniform(-1, 1, geom.n_nodes), rng.uniform(-1, 1, geom.n_cut))


def _endpoint_values(geom, u):
    """Values at (interior endpoint, exterior endpoint) of each cut interval."""
    if u.side == "plus":
        return u.values[geom.plus_node], u.ext
    return u.ext, u.values[geom.minus_node]


def differences(geom: GridGeometry, u: ExtendedField) -> np.ndarray:
    """Divided differences on every grid interval (zero on opposite-side intervals)."""
    _check(geom, u)
    own_kind = PLUS if u.side == "plus" else MINUS
    d = np.zeros(geom.int_lo.size)
    own = geom.int_kind == own_kind
    d[own] = (u.values[geom.int_hi[own]] - u.values[geom.int_lo[own]]) / geom.h
    vp, vm = _endpoint_values(geom, u)
    d[geom.cut_interval] = geom.sign * (vm - vp) / geom.h
    return d


def interval_weights(geom: GridGeometry, side: str) -> np.ndarray:
    """``xi`` (plus) or ``1 - xi`` (minus) on every interval."""
    if side == "plus":
        w = (geom.int_kind == PLUS).astype(float)
        w[geom.cut_interval] = geom.xi
    elif side == "minus":
        w = (geom.int_kind == MINUS).astype(float)
        w[geom.cut_interval] = 1.0 - geom.xi
    else:
        raise FieldError(f"unknown side {side!r}")
    return w


def trace_M(geom: GridGeometry, u: ExtendedField) -> np.ndarray:
    """Linear interpolation to the clamped boundary points.

    With ``xi`` the fraction of the interval from its interior endpoint, the
    value is ``(1 - xi) * u(interior end) + xi * u(exterior end)``.
    """
    _check(geom, u)
    vp, vm = _endpoint_values(geom, u)
    return (1.0 - geom.xi) * vp + geom.xi * vm


def lift_from_trace(geom: GridGeometry, values: np.ndarray, psi: np.ndarray, side: str) -> ExtendedField:
    """Field with the given own-side values whose trace is ``psi``."""
    u = make_field(geom, side, values)
    if side == "plus":
        own = u.values[geom.plus_node]
        u.ext = (psi - (1.0 - geom.xi) * own) / geom.xi
    else:
        own = u.values[geom.minus_node]
        u.ext = (psi - geom.xi * own) / (1.0 - geom.xi)
    return u


def laplacian_h(geom: GridGeometry, u: ExtendedField) -> np.ndarray:
    """Centered (2d+1)-point Laplacian on own-side nodes (zero elsewhere)."""
    d = differences(geom, u)
    own = own_mask(geom, u.side)
    use = geom.int_kind != (MINUS if u.side == "plus" else PLUS)
    lo, hi, dd = geom.int_lo[use], geom.int_hi[use], d[use]
    lo_own, hi_own = own[lo], own[hi]
    n = geom.n_nodes
    lap = np.bincount(lo[lo_own], dd[lo_own], minlength=n) - np.bincount(hi[hi_own], dd[hi_own], minlength=n)
    lap /= geom.h
    lap[~geom.side_mask(u.side)] = 0.0
    return lap


def inner(geom: GridGeometry, u: ExtendedField, v: ExtendedField, side: str | None = None) -> float:
    """Weighted Dirichlet inner product over own-side and cut intervals."""
    side = side or u.side
    if u.side != side or v.side != side:
        raise FieldError(f"inner product of {u.side!r} and {v.side!r} fields on side {side!r}")
    w = interval_weights(geom, side)
    return float(np.dot(differences(geom, u) * differences(geom, v), w) * geom.h**geom.dim)


def boundary_term(geom: GridGeometry, u: ExtendedField, v: ExtendedField) -> float:
    """``sum (D u)(M v)(D chi) h^d`` over cut intervals."""
    du = differences(geom, u)[geom.cut_interval]
    return float(np.dot(du * trace_M(geom, v), geom.dchi) * geom.h**geom.dim)


def green_residual(geom: GridGeometry, u: ExtendedField, v: ExtendedField) -> float:
    """Relative defect of the discrete Green identity for two same-side fields.

    plus:  sum (Lap u) v chi h^d + <u,v>+ = -boundary term
    minus: sum (Lap u) v (1-chi) h^d + <u,v>- = +boundary term
    """
    if u.side != v.side:
        raise FieldError("Green's identity needs two fields on the same side")
    hd = geom.h**geom.dim
    mask = geom.side_mask(u.side)
    vol_terms = laplacian_h(geom, u)[mask] * v.values[mask]
    vol = float(np.sum(vol_terms)) * hd
    uv = inner(geom, u, v)
    bt = boundary_term(geom, u, v)
    rhs = -bt if u.side == "plus" else bt
    scale = max(1.0, float(np.sum(np.abs(vol_terms))) * hd + abs(uv))
    return abs(vol + uv - rhs) / scale


def jump_pairing(geom: GridGeometry, v_plus: ExtendedField, v_minus: ExtendedField, zeta: np.ndarray) -> float:
    """``-sum [D v] zeta (D chi) h^d`` for the single layer pair ``v``."""
    cut = geom.cut_interval
    jump = differences(geom, v_plus)[cut] - differences(geom, v_minus)[cut]
    return -float(np.dot(jump * zeta, geom.dchi) * geom.h**geom.dim)


def product_rule_defect(geom: GridGeometry, f: ExtendedField) -> float:
    """Max defect of ``D(f chi) = (D f) xi + (M f)(D chi)`` on cut intervals (plus side).

    ``f chi`` is the single-valued grid function equal to ``f`` inside and zero outside.
    """
    fchi = np.where(geom.chi, f.values, 0.0)
    cut = geom.cut_interval
    lhs = (fchi[geom.cut_hi] - fchi[geom.cut_lo]) / geom.h
    rhs = differences(geom, f)[cut] * geom.xi + trace_M(geom, f) * geom.dchi
    return float(np.max(np.abs(lhs - rhs), initial=0.0))
