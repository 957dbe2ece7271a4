import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hallfem import assembly
from hallfem.feec import FESpace, FieldSpace, SpaceKind, canonical_interpolate
from hallfem.mesh import build_unit_box_mesh
from hallfem.reduction25d import planar_spaces

from oracle import CellBasis, OracleMesh, grundmann_moeller

K = SpaceKind


def test_dg0_mass_on_square():
    M = assembly.mass_matrix(FESpace(build_unit_box_mesh(1, 2), K.DG0))
    assert np.allclose(M.toarray(), np.diag([0.5, 0.5]), atol=1e-15)


def test_p1_mass_matches_reference_element():
    # both cells of the n=1 square are congruent to the reference triangle
    mesh = build_unit_box_mesh(1, 2)
    local = (np.ones((3, 3)) + np.eye(3)) / 24
    expected = np.zeros((4, 4))
    for cell in mesh.cells:
        expected[np.ix_(cell, cell)] += local
    M = assembly.mass_matrix(FESpace(mesh, K.P1))
    assert np.allclose(M.toarray(), expected, atol=1e-15)


@pytest.mark.parametrize("dim", [2, 3])
def test_p1_mass_row_sums_are_hat_integrals(dim):
    mesh = build_unit_box_mesh(3, dim)
    P1 = FESpace(mesh, K.P1)
    M = assembly.mass_matrix(P1)
    b = assembly.load_vector(P1, lambda p: np.ones(len(p)))
    assert np.allclose(M.sum(axis=1).A1, b, atol=1e-14)
    assert M.sum() == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("dim", [2, 3])
def test_stiffness_of_linear_function(dim):
    mesh = build_unit_box_mesh(3, dim)
    P1 = FESpace(mesh, K.P1)
    Kmat = assembly.stiffness_matrix(P1)
    x = mesh.vertices[:, 0]
    assert x @ Kmat @ x == pytest.approx(1.0, abs=1e-12)
    interior = ~mesh.boundary_vertices
    assert np.abs((Kmat @ x)[interior]).max() < 1e-12
    assert np.abs(Kmat @ np.ones(P1.ndofs)).max() < 1e-12


@pytest.mark.parametrize("dim", [2, 3])
def test_mini_stiffness_is_symmetric_positive(dim):
    V = FESpace(build_unit_box_mesh(2, dim), K.MINI, "zero")
    A = assembly.stiffness_matrix(V)[V.free][:, V.free].toarray()
    assert np.allclose(A, A.T, atol=1e-14)
    assert np.linalg.eigvalsh(A).min() > 0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dim=st.sampled_from([2, 3]))
def test_convection_is_skew(seed, dim):
    V = FieldSpace.single(FESpace(build_unit_box_mesh(2, dim), K.MINI))
    w = np.random.default_rng(seed).standard_normal(V.ndofs)
    N = assembly.convection_matrix(V, w)
    assert abs(N + N.T).max() <= 1e-13


def _magnetic_and_edge(dim, n=2):
    mesh = build_unit_box_mesh(n, dim)
    if dim == 3:
        return FieldSpace.single(FESpace(mesh, K.RT, "zero")), FieldSpace.single(FESpace(mesh, K.NED, "zero"))
    sp = planar_spaces(mesh)
    return sp["magnetic"], sp["edge"]


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dim=st.sampled_from([2, 3]))
def test_cross_matrix_skew_and_linear(seed, dim):
    Bs, X = _magnetic_and_edge(dim)
    rng = np.random.default_rng(seed)
    B1, B2 = rng.standard_normal((2, Bs.ndofs))
    a = rng.standard_normal()
    K1 = assembly.cross_matrix(X, X, Bs, B1)
    assert abs(K1 + K1.T).max() <= 1e-13
    K12 = assembly.cross_matrix(X, X, Bs, a * B1 + B2)
    K2 = assembly.cross_matrix(X, X, Bs, B2)
    assert abs(K12 - a * K1 - K2).max() <= 1e-12


def test_cross_matrix_pointwise_value():
    # (e_x x e_z) . e_y = -1, integrated over the unit cube
    mesh = build_unit_box_mesh(1, 3)
    DG = FESpace(mesh, K.DG0)
    vec = FieldSpace([(DG, (c,)) for c in range(3)])
    B = np.concatenate([np.zeros(6), np.zeros(6), np.ones(6)])
    Kmat = assembly.cross_matrix(vec, vec, vec, B)
    ex = np.concatenate([np.ones(6), np.zeros(12)])
    ey = np.concatenate([np.zeros(6), np.ones(6), np.zeros(6)])
    assert ey @ Kmat @ ex == pytest.approx(-1.0, abs=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_curl_pairing_matches_quadrature(dim):
    Bs, X = _magnetic_and_edge(dim)
    P = assembly.curl_pairing(X, Bs)
    Q = assembly.curl_pairing_quadrature(X, Bs)
    assert abs(P - Q).max() <= 1e-12


def test_load_vector_of_polynomial():
    mesh = build_unit_box_mesh(2, 2)
    P1 = FESpace(mesh, K.P1)
    f = lambda p: p[:, 0] * p[:, 1]
    b = assembly.load_vector(P1, f)
    assert b.sum() == pytest.approx(0.25, abs=1e-14)
    x = canonical_interpolate(P1, lambda p: p[:, 0])
    assert b @ x == pytest.approx(1 / 6, abs=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_gradient_load_matches_stiffness_on_linears(dim):
    mesh = build_unit_box_mesh(2, dim)
    P1 = FESpace(mesh, K.P1)
    f = lambda p: 2 * p[:, 0] - p[:, 1] + 0.5
    x = canonical_interpolate(P1, f)
    b = assembly.gradient_load_vector(P1, f)
    assert np.allclose(b, assembly.stiffness_matrix(P1) @ x, atol=1e-13)


def test_div_pressure_of_linear_velocity():
    mesh = build_unit_box_mesh(2, 2)
    V = FieldSpace.single(FESpace(mesh, K.MINI))
    Q = FESpace(mesh, K.P1)
    D = assembly.div_pressure_matrix(V, Q)
    u = canonical_interpolate(V, lambda p: np.stack([p[:, 0], p[:, 1]], axis=1))
    # div u = 2, so (D u)_i = 2 int phi_i
    assert np.allclose(D @ u, 2 * assembly.load_vector(Q, lambda p: np.ones(len(p))), atol=1e-13)


def test_assembly_is_deterministic():
    Bs, X = _magnetic_and_edge(3)
    B = np.random.default_rng(2).standard_normal(Bs.ndofs)
    A1 = assembly.cross_matrix(X, X, Bs, B)
    A2 = assembly.cross_matrix(X, X, Bs, B)
    assert np.array_equal(A1.indptr, A2.indptr)
    assert np.array_equal(A1.indices, A2.indices)
    assert np.array_equal(A1.data, A2.data)


def test_integrate_polynomial():
    assert assembly.integrate(build_unit_box_mesh(2, 3), lambda p: p[:, 0] * p[:, 1] * p[:, 2]) == pytest.approx(
        1 / 8, abs=1e-14
    )


# ---- dense oracles built from the independent per-cell basis


def _dense(mesh, integrand, shape, s=5):
    om = OracleMesh(mesh)
    qp, qw = grundmann_moeller(mesh.dim, s)
    from math import factorial

    out = np.zeros(shape)
    for c in range(mesh.num_cells):
        cb = CellBasis(om, c)
        for lam, w in zip(qp, qw):
            integrand(out, cb.at(lam @ cb.P), factorial(mesh.dim) * cb.vol * w)
    return out


def _mini(tab, mesh):
    """(dof, value (3,), gradient (3, dim)) for every MINI basis function."""
    d = mesh.dim
    block = mesh.num_vertices + mesh.num_cells
    scalars = list(tab["p1"])
    c, bv, bg = tab["bubble"]
    scalars.append((mesh.num_vertices + c, bv, bg))
    out = []
    for comp in range(d):
        for dof, v, g in scalars:
            val = np.zeros(3)
            grad = np.zeros((3, d))
            val[comp] = v
            grad[comp] = g
            out.append((comp * block + dof, val, grad))
    return out


def test_stiffness_interior_row_against_oracle():
    mesh = build_unit_box_mesh(2, 2)
    P1 = FESpace(mesh, K.P1)
    f = lambda p: p[:, 0] * (1 - p[:, 0]) * p[:, 1] * (1 - p[:, 1])
    x = canonical_interpolate(P1, f)

    def integrand(out, tab, w):
        for i, _, gi in tab["p1"]:
            for j, _, gj in tab["p1"]:
                out[i, j] += w * gi @ gj

    dense = _dense(mesh, integrand, (9, 9), s=1)
    (v,) = np.flatnonzero(~mesh.boundary_vertices)
    assert (assembly.stiffness_matrix(P1) @ x)[v] == pytest.approx(dense[v] @ x, abs=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_convection_against_oracle(dim):
    mesh = build_unit_box_mesh(1, dim)
    V = FieldSpace.single(FESpace(mesh, K.MINI))
    w = np.random.default_rng(11).standard_normal(V.ndofs)

    def integrand(out, tab, wt):
        basis = _mini(tab, mesh)
        wq = sum(w[i] * val for i, val, _ in basis)[:dim]
        for i, vi, gi in basis:
            for j, vj, gj in basis:
                out[i, j] += 0.5 * wt * ((gj @ wq) @ vi - (gi @ wq) @ vj)

    dense = _dense(mesh, integrand, (V.ndofs, V.ndofs))
    assert np.abs(assembly.convection_matrix(V, w).toarray() - dense).max() <= 1e-12
    assert assembly.convection_matrix(V, np.zeros(V.ndofs)).nnz == 0 or abs(
        assembly.convection_matrix(V, np.zeros(V.ndofs))
    ).max() == 0


def test_cross_matrix_constant_field_against_oracle():
    mesh = build_unit_box_mesh(1, 3)
    NED = FieldSpace.single(FESpace(mesh, K.NED))
    DG = FESpace(mesh, K.DG0)
    vec = FieldSpace([(DG, (c,)) for c in range(3)])
    B = np.concatenate([np.zeros(12), np.ones(6)])
    n = NED.ndofs

    def integrand(out, tab, w):
        for i, vi, _ in tab["ned"]:
            for j, vj, _ in tab["ned"]:
                out[i, j] += w * np.cross(vj, [0.0, 0.0, 1.0]) @ vi

    dense = _dense(mesh, integrand, (n, n), s=2)
    assert np.abs(assembly.cross_matrix(NED, NED, vec, B).toarray() - dense).max() <= 1e-12
    assert abs(assembly.cross_matrix(NED, NED, vec, 0 * B)).max() == 0


def test_curl_pairing_random_field_against_oracle():
    mesh = build_unit_box_mesh(1, 3)
    RT = FieldSpace.single(FESpace(mesh, K.RT))
    NED = FieldSpace.single(FESpace(mesh, K.NED))
    E = np.random.default_rng(4).standard_normal(NED.ndofs)

    def integrand(out, tab, w):
        curlE = sum(E[j] * cj for j, _, cj in tab["ned"])
        for i, vi, _ in tab["rt"]:
            out[i] += w * vi @ curlE

    dense = _dense(mesh, integrand, RT.ndofs, s=2)
    assert np.abs(assembly.curl_pairing(NED, RT) @ E - dense).max() <= 1e-12
    grad = assembly.curl_pairing(NED, RT) @ (sp_grad(mesh) @ np.random.default_rng(5).standard_normal(8))
    assert np.abs(grad).max() <= 1e-13


def sp_grad(mesh):
    from hallfem.feec import complex_operator

    return complex_operator(FESpace(mesh, K.P1), FESpace(mesh, K.NED))


@pytest.mark.parametrize("dim", [2, 3])
def test_div_pressure_against_oracle(dim):
    mesh = build_unit_box_mesh(1, dim)
    V = FieldSpace.single(FESpace(mesh, K.MINI))
    Q = FESpace(mesh, K.P1)

    def integrand(out, tab, w):
        for i, qi, _ in tab["p1"]:
            for j, _, gj in _mini(tab, mesh):
                out[i, j] += w * qi * np.trace(gj[:dim, :dim])

    dense = _dense(mesh, integrand, (Q.ndofs, V.ndofs))
    assert np.abs(assembly.div_pressure_matrix(V, Q).toarray() - dense).max() <= 1e-12
    Vz = FESpace(mesh, K.MINI, "zero")
    D0 = assembly.div_pressure_matrix(FieldSpace.single(Vz), Q)[:, Vz.free]
    assert np.abs(np.ones(Q.ndofs) @ D0).max() <= 1e-14


def test_dg0_load_of_sine_matches_cell_integrals():
    mesh = build_unit_box_mesh(2, 2)
    f = lambda p: np.sin(np.pi * p[:, 0])
    b = assembly.load_vector(FESpace(mesh, K.DG0), f)
    b_fine = assembly.load_vector(FESpace(mesh, K.DG0), f, degree=16)
    gx, gw = np.polynomial.legendre.leggauss(20)
    for val, fine, tri in zip(b, b_fine, mesh.cell_coordinates()):
        # Kuhn triangle: a vertical leg of length h at x_leg, apex at x_apex,
        # so the vertical extent is linear in x
        xs, counts = np.unique(tri[:, 0], return_counts=True)
        x_leg, x_apex = xs[counts == 2][0], xs[counts == 1][0]
        h = np.ptp(tri[tri[:, 0] == x_leg, 1])
        lo, hi = sorted((x_leg, x_apex))
        x = lo + (hi - lo) * (gx + 1) / 2
        extent = h * (x - x_apex) / (x_leg - x_apex)
        exact = (hi - lo) / 2 * gw @ (np.sin(np.pi * x) * extent)
        assert val == pytest.approx(exact, abs=1e-10)
        assert fine == pytest.approx(exact, abs=1e-13)
