"""Measured constants for the stability estimates.

Each quantity is the extremal value of a Rayleigh quotient, computed by a
(sparse or dense) generalized eigensolve, so it converges as h -> 0 rather
than drifting with the grid scale as random samples would.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .geometry import MINUS, PLUS, GridGeometry
from .operators import assemble_gram_parts, norm2, sw_flux_sums
from .solvers import _local_index, _single_layer_parts, single_layer_values


def _smallest_eig(K, k=1, sigma=-1e-3):
    vals = eigsh(sp.csc_matrix(K), k=k, sigma=sigma, which="LM", return_eigenvectors=False)
    return np.sort(vals)


def _graph_laplacian(geom, nodes, kind):
    """Laplacian of the uncut intervals joining ``nodes``; other endpoints count as pinned."""
    loc = _local_index(geom, nodes)
    sel = geom.int_kind == kind
    a, b = loc[geom.int_lo[sel]], loc[geom.int_hi[sel]]
    diag = np.bincount(a[a >= 0], minlength=nodes.size) + np.bincount(b[b >= 0], minlength=nodes.size)
    both = (a >= 0) & (b >= 0)
    off = sp.coo_matrix((-np.ones(both.sum()), (a[both], b[both])), shape=(nodes.size,) * 2)
    return (sp.diags(diag.astype(float)) + off + off.T).tocsc()


def poincare_constants(geom: GridGeometry) -> dict:
    """Best constants ``C`` in ``sum u^2 h^d <= C * (Dirichlet sum)`` for the three cases.

    ``trace_zero``: interior fields with zero trace, weighted sum incl. cut intervals;
    ``mean_zero``: interior functions with zero mean, uncut interior intervals;
    ``box_zero``: exterior functions vanishing on the box, uncut exterior intervals.
    """
    h2 = geom.h**2
    _, K0, _ = _single_layer_parts(geom, "plus")
    trace_zero = h2 / _smallest_eig(K0)[0]
    Kp = _graph_laplacian(geom, geom.plus_nodes, PLUS)
    mean_zero = h2 / _smallest_eig(Kp, k=2)[1]
    Km = _graph_laplacian(geom, geom.minus_nodes, MINUS)
    box_zero = h2 / _smallest_eig(Km)[0]
    return {"trace_zero": float(trace_zero), "mean_zero": float(mean_zero), "box_zero": float(box_zero)}


def extension_constants(geom: GridGeometry, method="direct") -> dict:
    """Extremal energy ratios of the interior and exterior single layers.

    ``forward = max <v+,v+> / <v-,v->`` over all traces;
    ``reverse = max <v-,v-> / <v+,v+>`` over traces whose interior single
    layer has mean zero (equivalently: subtract the interior mean and
    re-solve the exterior side with the shifted trace).
    """
    gp, gm = assemble_gram_parts(geom, method)
    forward = float(sla.eigvalsh(gp, gm)[-1])
    vp = single_layer_values(geom, np.eye(geom.n_cut), "plus", method)[geom.plus_nodes]
    mean_row = vp.mean(axis=0)
    Z = sla.null_space(mean_row[None, :])
    reverse = float(sla.eigvalsh(Z.T @ gm @ Z, Z.T @ gp @ Z)[-1])
    r_from_forward = forward / (1.0 + forward)
    return {"forward": forward, "reverse": reverse, "r_bound": r_from_forward}


def random_energy_ratios(geom: GridGeometry, rng, count=10, method="direct") -> dict:
    """Sampled counterparts of :func:`extension_constants` (random traces in [-1, 1])."""
    gp, gm = assemble_gram_parts(geom, method)
    vp = single_layer_values(geom, np.eye(geom.n_cut), "plus", method)[geom.plus_nodes]
    mean_row = vp.mean(axis=0)
    fwd, rev = [], []
    for _ in range(count):
        psi = rng.uniform(-1.0, 1.0, geom.n_cut)
        fwd.append(psi @ gp @ psi / (psi @ gm @ psi))
        shifted = psi - mean_row @ psi
        rev.append(shifted @ gm @ shifted / (psi @ gp @ psi))
    return {"forward_max": float(max(fwd)), "reverse_max": float(max(rev))}


def sw_bounds(geom: GridGeometry, f0, method="direct") -> dict:
    """Energy sums of the extended Shortley-Weller solution and its boundary norm."""
    interior, full = sw_flux_sums(geom, f0, method)
    return {"flux_interior": interior, "flux_weighted": full, "norm2": norm2(geom, f0, method)}


def band_ratio(values) -> float:
    """max / min of positive values (inf if any value is non-positive)."""
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        return float("inf")
    return float(v.max() / v.min())
