import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdbie.domains import complex_power, harmonic_polynomial, sin_cosh
from fdbie.errors import ConfigError, OperatorError
from fdbie.fields import make_field
from fdbie.geometry import build_geometry
from fdbie.operators import (
    OperatorHandle,
    apply_Ah,
    apply_calA,
    apply_calB,
    assemble_dense,
    assemble_gram,
    assemble_gram_parts,
    export_csv,
    interp_Q,
    norm1,
    norm2,
    restrict_sharp,
    single_layers,
    sl_inner,
    sl_norm,
    spectrum,
    tilde_lift,
)
from fdbie.fields import jump_pairing, sample_field
from fdbie.solvers import quadratic_extrapolate, shortley_weller

TOL = 10 * 1e-11


def test_calA_calB_constant(geom):
    one = np.ones(geom.n_cut)
    assert np.max(np.abs(apply_calA(geom, one) - 1)) <= TOL
    assert np.max(np.abs(apply_calB(geom, one))) <= TOL
    assert not np.any(apply_calA(geom, np.zeros(geom.n_cut)))


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_calA_minus_calB_is_identity(circle32, rng, method):
    for _ in range(3):
        phi = rng.uniform(-1, 1, circle32.n_cut)
        d = apply_calA(circle32, phi, method) - phi - apply_calB(circle32, phi, method)
        assert np.max(np.abs(d)) <= TOL


def test_sl_inner_properties(geom, rng):
    psi, zeta = rng.uniform(-1, 1, (2, geom.n_cut))
    a, b = sl_inner(geom, psi, zeta), sl_inner(geom, zeta, psi)
    assert abs(a - b) <= 1e-10 * max(1, abs(a))
    assert sl_inner(geom, np.zeros(geom.n_cut), psi) == 0
    assert sl_norm(geom, psi) ** 2 == pytest.approx(sl_inner(geom, psi, psi), rel=1e-12)
    assert sl_norm(geom, psi) > 0


def test_sl_inner_matches_jump_pairing(circle32, rng):
    psi, zeta = rng.uniform(-1, 1, (2, circle32.n_cut))
    vp, vm = single_layers(circle32, psi)
    val = sl_inner(circle32, psi, zeta)
    assert abs(val - jump_pairing(circle32, vp, vm, zeta)) <= TOL * max(1, abs(val))


def test_gram_matches_sl_inner(circle16, rng):
    G = assemble_gram(circle16)
    psi, zeta = rng.uniform(-1, 1, (2, circle16.n_cut))
    assert psi @ G @ zeta == pytest.approx(sl_inner(circle16, psi, zeta), rel=1e-12)
    assert np.max(np.abs(G - G.T)) <= 1e-10 * np.max(np.abs(G))
    np.linalg.cholesky(G)


def test_dense_matches_apply(circle16):
    B = assemble_dense(circle16, "calB")
    e = np.zeros(circle16.n_cut)
    e[0] = 1
    assert np.allclose(B[:, 0], apply_calB(circle16, e), atol=1e-14)
    A = assemble_dense(circle16, "calA")
    assert np.max(np.abs(A - B - np.eye(circle16.n_cut))) <= TOL
    handle = OperatorHandle(circle16, "Ah")
    x = np.random.default_rng(1).uniform(-1, 1, circle16.n_gamma0)
    assert np.allclose(handle.dense() @ x, handle(x), atol=1e-13)


def test_dense_single_layer_columns(circle16, rng):
    S = assemble_dense(circle16, "Splus")
    psi = rng.uniform(-1, 1, circle16.n_cut)
    v = OperatorHandle(circle16, "Splus").apply(psi)
    assert np.allclose(S @ psi, v.values[circle16.plus_nodes], atol=1e-12)


def test_dense_cap_and_tags(circle32):
    with pytest.raises(ConfigError):
        assemble_dense(circle32, "calB", cap=10)
    with pytest.raises(ConfigError):
        assemble_dense(circle32, "calC")
    with pytest.raises(ConfigError):
        OperatorHandle(circle32, "nope")


@pytest.mark.parametrize("name", ["circle16", "degenerate16"])
def test_spectrum_calB(request, name):
    g = request.getfixturevalue(name)
    s = spectrum(g, "calB")
    assert s.asymmetry <= 1e-8
    assert 0 < s.r_hat < 1
    assert s.eigenvalues.max() <= 1e-8
    a = spectrum(g, "calA")
    assert a.eigenvalues.min() >= 1 - s.r_hat - 1e-8 and a.eigenvalues.max() <= 1 + 1e-8


def test_spectrum_Ah_small(circle16):
    s = spectrum(circle16, "Ah")
    assert s.imag_max <= 1e-8
    assert s.eigenvalues.min() > 0 and s.eigenvalues.max() <= 1 + 1e-8


def test_calB_contraction_and_pairing(circle16, rng):
    gp, gm = assemble_gram_parts(circle16)
    G = gp + gm
    B = assemble_dense(circle16, "calB")
    r = spectrum(circle16, "calB", gram=G, dense=B).r_hat
    for _ in range(5):
        phi, zeta = rng.uniform(-1, 1, (2, circle16.n_cut))
        bphi = B @ phi
        assert np.sqrt(bphi @ G @ bphi) <= r * np.sqrt(phi @ G @ phi) * (1 + 1e-6)
        assert bphi @ G @ zeta == pytest.approx(-(phi @ gp @ zeta), rel=1e-9, abs=1e-12)


def test_lift_restrict(degenerate16, rng):
    g = degenerate16
    phi0 = rng.uniform(-1, 1, g.n_gamma0)
    lifted = tilde_lift(g, phi0)
    for q, cs in g.multiplicity.items():
        assert len(set(lifted[cs])) == 1
    assert np.array_equal(restrict_sharp(g, lifted), phi0)
    bad = lifted.copy()
    cs = next(iter(g.multiplicity.values()))
    bad[cs[0]] += 0.5
    with pytest.raises(OperatorError, match="grid node"):
        restrict_sharp(g, bad)


def test_lift_is_reindexing_without_multiplicity(circle32):
    assert not circle32.multiplicity
    assert sorted(circle32.gamma0_of_cut.tolist()) == list(range(circle32.n_cut))


def test_multiplicity_two_value(degenerate16):
    g = degenerate16
    phi0 = np.zeros(g.n_gamma0)
    q, cs = next(iter(g.multiplicity.items()))
    phi0[g.gamma0_of_cut[cs[0]]] = 5.0
    assert np.all(tilde_lift(g, phi0)[cs] == 5.0)


def test_Q_inverse_example(circle16):
    g = dataclasses.replace(circle16, s_plus=np.full(circle16.n_cut, 0.5), cache={})
    u = make_field(g, "plus", np.zeros(g.n_nodes), np.full(g.n_cut, 8 / 3))
    # quadratic through (-1, 0), (0, 0), (1, 8/3) at s = 1/2
    assert np.allclose(interp_Q(g, u), 1.0)


def test_Q_reproduces_quadratic(geom):
    q = lambda x: x[:, 0] ** 2 - 0.5 * x[:, 1] ** 2 + x[:, 0] * x[:, 1] - x[:, 1]
    u = sample_field(geom, "plus", q)
    assert np.max(np.abs(interp_Q(geom, u) - q(geom.gamma0_points))) <= 1e-12


def test_Q_rejects_multivalued(degenerate16):
    g = degenerate16
    u = make_field(g, "plus", np.zeros(g.n_nodes), np.zeros(g.n_cut))
    u.ext[next(iter(g.multiplicity.values()))[0]] = 1.0
    with pytest.raises(OperatorError):
        interp_Q(g, u)
    with pytest.raises(OperatorError):
        interp_Q(g, make_field(g, "minus"))


def test_Q_inverts_extrapolation(geom, rng):
    f = rng.uniform(-1, 1, geom.n_gamma0)
    u = quadratic_extrapolate(geom, shortley_weller(geom, f), f)
    assert np.max(np.abs(interp_Q(geom, u) - f)) <= 1e-10


def test_Ah_constant_and_zero(geom):
    assert np.allclose(apply_Ah(geom, np.ones(geom.n_gamma0)), 1.0, atol=TOL)
    assert not np.any(apply_Ah(geom, np.zeros(geom.n_gamma0)))


def test_Ah_composite(degenerate16, rng):
    from fdbie.solvers import solve_interface

    phi0 = rng.uniform(-1, 1, degenerate16.n_gamma0)
    up, _ = solve_interface(degenerate16, tilde_lift(degenerate16, phi0))
    assert np.array_equal(apply_Ah(degenerate16, phi0), interp_Q(degenerate16, up))


def test_norms(circle32, rng):
    z = np.zeros(circle32.n_gamma0)
    assert norm1(circle32, z) == 0 and norm2(circle32, z) == 0
    phi = rng.uniform(-1, 1, circle32.n_gamma0)
    assert norm2(circle32, apply_Ah(circle32, phi)) <= 2 * norm1(circle32, phi) + TOL


def test_norm2_bounded_for_x():
    from fdbie.domains import circle

    vals = []
    for n in (32, 64, 128):
        g = build_geometry(circle(), n)
        vals.append(norm2(g, harmonic_polynomial("x")(g.gamma0_points)))
    assert max(vals) / min(vals) <= 1.2


def test_export_csv(tmp_path):
    a = np.array([[1 / 3, 2.0], [np.pi, -1e-20]])
    path = tmp_path / "m.csv"
    export_csv(path, a)
    back = np.loadtxt(path, delimiter=",")
    assert np.array_equal(back, a)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_restrict_lift_round_trip_property(degenerate16, seed):
    phi0 = np.random.default_rng(seed).normal(size=degenerate16.n_gamma0)
    assert np.array_equal(restrict_sharp(degenerate16, tilde_lift(degenerate16, phi0)), phi0)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_calB_nonpositive_property(circle16, seed):
    phi = np.random.default_rng(seed).uniform(-1, 1, circle16.n_cut)
    G = assemble_gram(circle16)
    assert apply_calB(circle16, phi) @ G @ phi <= 1e-12
