import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hallfem import assembly
from hallfem.feec import FESpace, SpaceKind, canonical_interpolate, complex_operator, evaluate_at_points
from hallfem.mesh import build_unit_box_mesh
from hallfem.quadrature import simplex_rule
from hallfem.reduction25d import (
    DimensionError,
    aggregate_cross,
    perp_gradient_operator,
    planar_cross_blocks,
    planar_spaces,
    rot_operator,
    split_planar,
)
from hallfem.scheme import Discretization

from oracle import CellBasis, OracleMesh, grundmann_moeller

K = SpaceKind


def _spaces(n):
    mesh = build_unit_box_mesh(n, 2)
    return mesh, FESpace(mesh, K.P1), FESpace(mesh, K.RT), FESpace(mesh, K.NED), FESpace(mesh, K.DG0)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_div_of_perp_grad_vanishes(n):
    _, P1, RT, _, DG = _spaces(n)
    prod = complex_operator(RT, DG) @ perp_gradient_operator(P1, RT)
    assert prod.nnz == 0 or abs(prod).max() == 0


def test_perp_grad_of_x():
    mesh, P1, RT, _, _ = _spaces(3)
    flux = perp_gradient_operator(P1, RT) @ mesh.vertices[:, 0]
    rule = simplex_rule(2, 4)
    pts = np.einsum("qi,cik->cqk", rule.points, mesh.cell_coordinates()).reshape(-1, 2)
    vals = evaluate_at_points(RT, flux, pts)[:, :2]
    assert np.allclose(vals, [0.0, -1.0], atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_perp_grad_against_per_cell_differentiation(seed):
    mesh, P1, RT, _, _ = _spaces(1)
    phi = np.random.default_rng(seed).standard_normal(4)
    flux = perp_gradient_operator(P1, RT) @ phi
    om = OracleMesh(mesh)
    for c in range(mesh.num_cells):
        cb = CellBasis(om, c)
        x = cb.P.mean(axis=0)
        g = sum(phi[v] * G for v, _, G in cb.at(x)["p1"])
        expected = sum(flux[e] * w for e, w, _ in cb.at(x)["rt"])
        assert np.allclose(expected, [g[1], -g[0]], atol=1e-12)


def test_rot_of_constant_is_zero():
    mesh, P1, _, NED, DG = _spaces(3)
    v = canonical_interpolate(NED, lambda p: np.tile([0.3, -1.2], (len(p), 1)))
    assert np.abs(rot_operator(NED, DG) @ v).max() <= 1e-13
    assert np.abs(rot_operator(NED, P1) @ v).max() <= 1e-13


def test_rot_of_perp_grad_is_weak_laplacian():
    # phi = x^2 + y^2: rot(perp-grad phi) = -lap(phi) = -4, exact through the commuting diagram
    mesh, P1, _, NED, DG = _spaces(3)
    v = canonical_interpolate(NED, lambda p: np.stack([2 * p[:, 1], -2 * p[:, 0]], axis=1))
    hat = assembly.load_vector(P1, lambda p: np.ones(len(p)))
    assert np.allclose(rot_operator(NED, P1) @ v, -4 * hat, atol=1e-12)
    assert np.allclose(rot_operator(NED, DG) @ v / mesh.volumes(), -4, atol=1e-12)
    lin = canonical_interpolate(NED, lambda p: np.tile([1.0, -3.0], (len(p), 1)))
    assert np.abs(rot_operator(NED, P1) @ lin).max() <= 1e-13


def test_rot_pairing_against_oracle():
    mesh, P1, _, NED, _ = _spaces(2)
    om = OracleMesh(mesh)
    qp, qw = grundmann_moeller(2, 2)
    dense = np.zeros((P1.ndofs, NED.ndofs))
    for c in range(mesh.num_cells):
        cb = CellBasis(om, c)
        for lam, w in zip(qp, qw):
            tab = cb.at(lam @ cb.P)
            for i, qi, _ in tab["p1"]:
                for e, _, rot in tab["ned"]:
                    dense[i, e] += 2 * cb.vol * w * qi * rot
    assert np.abs(rot_operator(NED, P1).toarray() - dense).max() <= 1e-12


def test_planar_operators_reject_3d():
    mesh = build_unit_box_mesh(1, 3)
    with pytest.raises(DimensionError):
        perp_gradient_operator(FESpace(mesh, K.P1), FESpace(mesh, K.RT))
    with pytest.raises(DimensionError):
        rot_operator(FESpace(mesh, K.NED), FESpace(mesh, K.DG0))
    with pytest.raises(DimensionError):
        planar_spaces(mesh)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 3))
def test_aggregate_cross_is_skew(seed, n):
    spaces = planar_spaces(build_unit_box_mesh(n, 2))
    rng = np.random.default_rng(seed)
    agg = aggregate_cross(planar_cross_blocks(spaces, rng.standard_normal(spaces["magnetic"].ndofs)))
    v = rng.standard_normal(agg.shape[0])
    assert abs(v @ agg @ v) <= 1e-13 * max(1.0, abs(agg).max() * (v @ v))
    assert abs(agg + agg.T).max() <= 1e-13


def test_zero_field_gives_zero_blocks():
    spaces = planar_spaces(build_unit_box_mesh(2, 2))
    blocks = planar_cross_blocks(spaces, np.zeros(spaces["magnetic"].ndofs))
    assert len(blocks) == 16
    assert all(abs(b).max() == 0 for b in blocks.values() if b.nnz)


def _planar_cross(a_pl, a3, b_pl, b3):
    # v~ x phi = (v2 phi, -v1 phi),  v~ x w~ = v1 w2 - v2 w1
    inplane = np.array([a_pl[1] * b3, -a_pl[0] * b3]) - np.array([b_pl[1] * a3, -b_pl[0] * a3])
    return inplane, a_pl[0] * b_pl[1] - a_pl[1] * b_pl[0]


def test_cross_blocks_against_planar_oracle():
    mesh = build_unit_box_mesh(1, 2)
    spaces = planar_spaces(mesh)
    Bfs = spaces["magnetic"]
    rng = np.random.default_rng(3)
    B = rng.standard_normal(Bfs.ndofs)
    B_rt, B_p1 = Bfs.split(B)
    blocks = planar_cross_blocks(spaces, B)
    om = OracleMesh(mesh)
    qp, qw = grundmann_moeller(2, 5)
    nv = mesh.num_vertices
    block = nv + mesh.num_cells
    sizes = {"u~": 2 * block, "u3": nv, "J~": len(mesh.edges), "J3": nv}
    dense = {(a, b): np.zeros((sizes[a], sizes[b])) for a in sizes for b in sizes}

    def funcs(tab):
        # (name, dof, in-plane value, out-of-plane value)
        out = []
        c, bub, _ = tab["bubble"]
        scal = [(v, val) for v, val, _ in tab["p1"]] + [(nv + c, bub)]
        for comp in range(2):
            for dof, val in scal:
                vec = np.zeros(2)
                vec[comp] = val
                out.append(("u~", comp * block + dof, vec, 0.0))
        for v, val, _ in tab["p1"]:
            out.append(("u3", v, np.zeros(2), val))
            out.append(("J3", v, np.zeros(2), val))
        for e, w, _ in tab["ned"]:
            out.append(("J~", e, w, 0.0))
        return out

    for c in range(mesh.num_cells):
        cb = CellBasis(om, c)
        for lam, w in zip(qp, qw):
            tab = cb.at(lam @ cb.P)
            Bpl = sum(B_rt[e] * val for e, val, _ in tab["rt"])
            B3 = sum(B_p1[v] * val for v, val, _ in tab["p1"])
            fs = funcs(tab)
            for tn, ti, tpl, t3 in fs:
                for rn, ri, rpl, r3 in fs:
                    cpl, c3 = _planar_cross(rpl, r3, Bpl, B3)
                    dense[tn, rn][ti, ri] += 2 * cb.vol * w * (cpl @ tpl + c3 * t3)
    for key, mat in blocks.items():
        assert np.abs(mat.toarray() - dense[key]).max() <= 1e-12, key


def test_split_planar_components():
    disc = Discretization.build(2, 2)
    s = disc.zero_state()
    s.B = np.arange(disc.Bs.ndofs, dtype=float)
    bundle = split_planar(s, disc.spaces)
    assert len(bundle.B_plane) == len(build_unit_box_mesh(2, 2).edges)
    assert len(bundle.B3) == 9
    assert np.array_equal(np.concatenate([bundle.B_plane, bundle.B3]), s.B)
