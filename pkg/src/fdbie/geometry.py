"""Embedded-boundary grid data.

Grid points of the box ``[-L, L]^d`` are classified as interior
(``chi = 1``, level set negative) or exterior (``chi = 0``).  A grid
interval whose endpoints are classified differently is *cut*; every cut
interval carries

* the exact crossing of the interface (the point used by the finite
  difference method, one per distinct crossing location), and
* a second point kept at least ``delta * h`` away from both endpoints,
  used to define traces and the fraction weight ``xi``.

Nodes are addressed by flat C-order index over the ``(n+1)^d`` grid, axis 0
being x.  Intervals are addressed by ``(lower node, axis)`` and stored in
flat arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .domains import ImplicitDomain
from .errors import ConfigError, GeometryError

MINUS, PLUS, CUT = 0, 1, 2

ROOT_TOL = 1e-12  # in units of h
SNAP_TOL = 1e-10  # in units of h
DEFAULT_DELTA = 0.1


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    half_width: float = 1.0

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def shape(self) -> tuple:
        return (self.n + 1,) * self.dim

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def strides(self) -> np.ndarray:
        return np.array([(self.n + 1) ** (self.dim - 1 - k) for k in range(self.dim)])

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)

    def coords(self, flat) -> np.ndarray:
        return -self.half_width + self.h * self.multi_index(flat).astype(float)

    def all_coords(self) -> np.ndarray:
        return self.coords(np.arange(self.n_nodes))

    def on_box(self) -> np.ndarray:
        idx = self.multi_index(np.arange(self.n_nodes))
        return np.any((idx == 0) | (idx == self.n), axis=1)

    def intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower-node index and axis of every grid interval, axis-major."""
        nodes = np.arange(self.n_nodes).reshape(self.shape)
        lo, axis = [], []
        for nu in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[nu] = slice(0, self.n)
            block = nodes[tuple(sl)].ravel()
            lo.append(block)
            axis.append(np.full(block.size, nu))
        return np.concatenate(lo), np.concatenate(axis)


@dataclass(frozen=True)
class Classification:
    grid: Grid
    phi: np.ndarray
    chi: np.ndarray
    on_box: np.ndarray

    @property
    def n_plus(self) -> int:
        return int(self.chi.sum())

    @property
    def n_minus(self) -> int:
        return int(self.chi.size - self.chi.sum())


@dataclass(frozen=True)
class CutIntervals:
    interval: np.ndarray  # index into the full interval list
    lo: np.ndarray
    hi: np.ndarray
    axis: np.ndarray
    s_cross: np.ndarray  # crossing fraction measured from lo

    def __len__(self):
        return self.lo.size


def classify_grid(domain: ImplicitDomain, n: int) -> Classification:
    """Evaluate the level set on the grid; ``phi < 0`` is interior, exact zeros exterior."""
    if n < 8:
        raise ConfigError(f"resolution n={n} too small (need n >= 8)")
    grid = Grid(domain.dim, int(n), domain.half_width)
    phi = domain(grid.all_coords())
    chi = phi < 0
    on_box = grid.on_box()
    if np.any(chi & on_box):
        raise GeometryError("interface reaches the box boundary")
    return Classification(grid, phi, chi, on_box)


def _sample(domain, grid, lo, axis, t):
    x = grid.coords(lo)
    x[np.arange(lo.size), axis] += t * grid.h
    return domain(x)


def find_cut_intervals(cls: Classification, domain: ImplicitDomain) -> CutIntervals:
    """Locate cut intervals and their crossings by bisection.

    Every interval is also probed at its quarter points; an interval on which
    the classification changes more than once raises GeometryError.
    """
    grid = cls.grid
    lo, axis = grid.intervals()
    hi = lo + grid.strides[axis]
    inside = [cls.chi[lo]]
    for t in (0.25, 0.5, 0.75):
        inside.append(_sample(domain, grid, lo, axis, t) < 0)
    inside.append(cls.chi[hi])
    inside = np.stack(inside, axis=1)
    changes = np.sum(inside[:, 1:] != inside[:, :-1], axis=1)
    bad = np.flatnonzero(changes > 1)
    if bad.size:
        k = bad[0]
        raise GeometryError(
            f"{bad.size} grid interval(s) cross the interface more than once "
            f"(first: node {grid.multi_index(lo[k]).tolist()}, axis {axis[k]}); refine the grid"
        )

    idx = np.flatnonzero(cls.chi[lo] != cls.chi[hi])
    clo, chi_, cax = lo[idx], hi[idx], axis[idx]
    lo_inside = cls.chi[clo]
    a = np.zeros(idx.size)
    b = np.ones(idx.size)
    for _ in range(60):
        if idx.size == 0 or np.max(b - a) <= ROOT_TOL:
            break
        mid = 0.5 * (a + b)
        same = (_sample(domain, grid, clo, cax, mid) < 0) == lo_inside
        a = np.where(same, mid, a)
        b = np.where(same, b, mid)
    if idx.size and np.max(b - a) > ROOT_TOL:
        k = int(np.argmax(b - a))
        raise GeometryError(f"root finding did not converge on cut interval {idx[k]}")
    return CutIntervals(idx, clo, chi_, cax, 0.5 * (a + b))


def _assign_gamma0(cls, cuts):
    """Crossing fraction from the interior endpoint and distinct crossing points.

    A crossing within SNAP_TOL*h of the exterior endpoint is moved onto that
    grid node; all cut intervals ending there share one crossing point.
    """
    plus_is_lo = cls.chi[cuts.lo]
    s_plus = np.where(plus_is_lo, cuts.s_cross, 1.0 - cuts.s_cross)
    minus_node = np.where(plus_is_lo, cuts.hi, cuts.lo)
    snapped = (1.0 - s_plus) <= SNAP_TOL
    s_plus = np.where(snapped, 1.0, s_plus)

    gamma0_of_cut = np.empty(len(cuts), dtype=np.int64)
    gamma0_node = []
    node_slot = {}
    for c in range(len(cuts)):
        if snapped[c]:
            q = int(minus_node[c])
            if q not in node_slot:
                node_slot[q] = len(gamma0_node)
                gamma0_node.append(q)
            gamma0_of_cut[c] = node_slot[q]
        else:
            gamma0_of_cut[c] = len(gamma0_node)
            gamma0_node.append(-1)
    return s_plus, gamma0_of_cut, np.array(gamma0_node, dtype=np.int64)


def assign_gamma1(s_cross, chi_lo, chi_hi, delta):
    """Clamp crossings to ``[delta, 1-delta]`` and form the fraction weights.

    Returns ``(s1, xi)`` with ``s1`` measured from the lower endpoint and
    ``xi = s1*chi(lo) + (1-s1)*chi(hi)``.
    """
    if not 0.0 < delta <= 0.5:
        raise ConfigError(f"delta must lie in (0, 1/2], got {delta}")
    s1 = np.clip(np.asarray(s_cross, dtype=float), delta, 1.0 - delta)
    xi = s1 * np.asarray(chi_lo, dtype=float) + (1.0 - s1) * np.asarray(chi_hi, dtype=float)
    return s1, xi


@dataclass(frozen=True, eq=False)
class GridGeometry:
    grid: Grid
    domain: ImplicitDomain
    delta: float
    phi: np.ndarray
    chi: np.ndarray
    on_box: np.ndarray
    # every interval
    int_lo: np.ndarray
    int_hi: np.ndarray
    int_axis: np.ndarray
    int_kind: np.ndarray
    int_cut: np.ndarray
    # cut intervals
    cut_interval: np.ndarray
    cut_lo: np.ndarray
    cut_hi: np.ndarray
    cut_axis: np.ndarray
    s_cross: np.ndarray
    plus_node: np.ndarray
    minus_node: np.ndarray
    sign: np.ndarray  # +1 when the exterior endpoint lies in the +axis direction
    s_plus: np.ndarray  # crossing fraction from the interior endpoint (unclamped)
    s1: np.ndarray
    xi: np.ndarray
    gamma0_of_cut: np.ndarray
    gamma0_node: np.ndarray
    opposite_cut: np.ndarray
    back_node: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes

    @property
    def n_cut(self) -> int:
        return self.cut_lo.size

    @property
    def n_gamma0(self) -> int:
        return self.gamma0_node.size

    @cached_property
    def dchi(self) -> np.ndarray:
        """Divided difference of chi on each cut interval (+-1/h)."""
        return -self.sign / self.h

    @cached_property
    def plus_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.chi)

    @cached_property
    def minus_nodes(self) -> np.ndarray:
        """Exterior nodes off the box boundary (the exterior unknowns)."""
        return np.flatnonzero(~self.chi & ~self.on_box)

    @cached_property
    def multiplicity(self) -> dict:
        """Grid node -> cut intervals sharing it as their crossing point (groups of size >= 2)."""
        groups = {}
        for c, g in enumerate(self.gamma0_of_cut):
            q = int(self.gamma0_node[g])
            if q >= 0:
                groups.setdefault(q, []).append(c)
        return {q: cs for q, cs in groups.items() if len(cs) > 1}

    @cached_property
    def gamma0_points(self) -> np.ndarray:
        pts = np.empty((self.n_gamma0, self.dim))
        first = np.full(self.n_gamma0, -1)
        for c in range(self.n_cut - 1, -1, -1):
            first[self.gamma0_of_cut[c]] = c
        c = first
        x = self.grid.coords(self.plus_node[c])
        x[np.arange(c.size), self.cut_axis[c]] += self.sign[c] * self.s_plus[c] * self.h
        pts[:] = x
        return pts

    @cached_property
    def gamma1_points(self) -> np.ndarray:
        x = self.grid.coords(self.cut_lo)
        x[np.arange(self.n_cut), self.cut_axis] += self.s1 * self.h
        return x

    def side_mask(self, side: str) -> np.ndarray:
        """Nodes where the discrete Laplacian of a ``side`` field is defined."""
        if side == "plus":
            return self.chi.copy()
        if side == "minus":
            return ~self.chi & ~self.on_box
        raise ConfigError(f"side must be 'plus' or 'minus', got {side!r}")

    def with_delta(self, delta: float) -> "GridGeometry":
        """Same grid and crossings with a different Gamma_h^1 clamp."""
        s1, xi = assign_gamma1(self.s_cross, self.chi[self.cut_lo], self.chi[self.cut_hi], delta)
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "cache"}
        kw.update(delta=float(delta), s1=s1, xi=xi)
        return GridGeometry(**kw)

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "h": self.h,
            "delta": self.delta,
            "domain": self.domain.name,
            "domain_params": self.domain.params,
            "n_plus": int(self.chi.sum()),
            "n_minus": int((~self.chi).sum()),
            "n_cut": self.n_cut,
            "n_gamma0": self.n_gamma0,
            "n_multiple_cut_points": len(self.multiplicity),
            "n_double_cut_arms": int(np.sum(self.opposite_cut >= 0)),
            "xi_min": float(self.xi.min()) if self.n_cut else None,
            "xi_max": float(self.xi.max()) if self.n_cut else None,
            "s_plus_min": float(self.s_plus.min()) if self.n_cut else None,
        }

    def to_json(self, include_cuts=True) -> str:
        out = self.summary()
        if include_cuts:
            idx = self.grid.multi_index(self.cut_lo)
            out["cuts"] = [
                {
                    "axis": int(self.cut_axis[c]),
                    "lo": idx[c].tolist(),
                    "s_cross": float(self.s_cross[c]),
                    "s1": float(self.s1[c]),
                    "xi": float(self.xi[c]),
                    "gamma0": int(self.gamma0_of_cut[c]),
                }
                for c in range(self.n_cut)
            ]
            out["multiplicity"] = {str(q): cs for q, cs in self.multiplicity.items()}
        return json.dumps(out, indent=2, sort_keys=True)


def _check_connected(grid, mask, int_lo, int_hi, kind, label):
    nodes = np.flatnonzero(mask)
    if nodes.size == 0:
        raise GeometryError(f"{label} region contains no grid points")
    sel = kind
    local = np.full(grid.n_nodes, -1)
    local[nodes] = np.arange(nodes.size)
    a, b = local[int_lo[sel]], local[int_hi[sel]]
    g = coo_matrix((np.ones(a.size), (a, b)), shape=(nodes.size, nodes.size))
    ncomp, _ = connected_components(g, directed=False)
    if ncomp != 1:
        raise GeometryError(f"{label} grid points split into {ncomp} components; refine the grid")


def build_geometry(domain: ImplicitDomain, n: int, delta: float = DEFAULT_DELTA) -> GridGeometry:
    """Classify the grid, find cuts, assign both boundary point sets, validate."""
    if not 0.0 < delta <= 0.5:
        raise ConfigError(f"delta must lie in (0, 1/2], got {delta}")
    cls = classify_grid(domain, n)
    grid = cls.grid
    for _ in range(5):
        cuts = find_cut_intervals(cls, domain)
        plus_is_lo = cls.chi[cuts.lo]
        s_from_plus = np.where(plus_is_lo, cuts.s_cross, 1.0 - cuts.s_cross)
        near = s_from_plus <= SNAP_TOL
        if not near.any():
            break
        # interface passes through an interior-classified node: treat it as exterior
        chi = cls.chi.copy()
        chi[np.where(plus_is_lo, cuts.lo, cuts.hi)[near]] = False
        cls = Classification(grid, cls.phi, chi, cls.on_box)
    else:
        raise GeometryError("could not resolve crossings at grid nodes")

    chi = cls.chi
    int_lo, int_axis = grid.intervals()
    int_hi = int_lo + grid.strides[int_axis]
    kind = np.where(chi[int_lo] & chi[int_hi], PLUS, np.where(~chi[int_lo] & ~chi[int_hi], MINUS, CUT))
    int_cut = np.full(int_lo.size, -1)
    int_cut[cuts.interval] = np.arange(len(cuts))

    if np.any(cls.on_box[cuts.lo] | cls.on_box[cuts.hi]):
        raise GeometryError("a cut interval touches the box boundary; interface too close to the box")

    s_plus, gamma0_of_cut, gamma0_node = _assign_gamma0(cls, cuts)
    plus_is_lo = chi[cuts.lo]
    s_cross = np.where(plus_is_lo, s_plus, 1.0 - s_plus)
    s1, xi = assign_gamma1(s_cross, chi[cuts.lo], chi[cuts.hi], delta)
    plus_node = np.where(plus_is_lo, cuts.lo, cuts.hi)
    minus_node = np.where(plus_is_lo, cuts.hi, cuts.lo)
    sign = np.where(plus_is_lo, 1, -1)

    # arm table: arm[p, nu, 1] is the cut on [p, p+e_nu], arm[p, nu, 0] on [p-e_nu, p]
    arm = np.full((grid.n_nodes, grid.dim, 2), -1)
    cid = np.arange(len(cuts))
    arm[cuts.lo, cuts.axis, 1] = cid
    arm[cuts.hi, cuts.axis, 0] = cid
    opposite_cut = arm[plus_node, cuts.axis, np.where(sign > 0, 0, 1)]
    back_node = plus_node - sign * grid.strides[cuts.axis]

    n_arms_cut = np.bincount(plus_node, minlength=grid.n_nodes)
    if np.any(n_arms_cut >= 2 * grid.dim):
        p = int(np.argmax(n_arms_cut))
        raise GeometryError(
            f"interior node {grid.multi_index(p).tolist()} has every stencil arm cut; refine the grid"
        )
    _check_connected(grid, chi, int_lo, int_hi, kind == PLUS, "interior")
    _check_connected(grid, ~chi, int_lo, int_hi, kind == MINUS, "exterior")

    return GridGeometry(
        grid=grid,
        domain=domain,
        delta=float(delta),
        phi=cls.phi,
        chi=chi,
        on_box=cls.on_box,
        int_lo=int_lo,
        int_hi=int_hi,
        int_axis=int_axis,
        int_kind=kind,
        int_cut=int_cut,
        cut_interval=cuts.interval,
        cut_lo=cuts.lo,
        cut_hi=cuts.hi,
        cut_axis=cuts.axis,
        s_cross=s_cross,
        plus_node=plus_node,
        minus_node=minus_node,
        sign=sign,
        s_plus=s_plus,
        s1=s1,
        xi=xi,
        gamma0_of_cut=gamma0_of_cut,
        gamma0_node=gamma0_node,
        opposite_cut=opposite_cut,
        back_node=back_node,
    )
