"""Galerkin assembly of the bilinear and frozen-coefficient forms.

Every form is integrated with a conical Gauss rule whose degree is the sum
of the polynomial degrees of its factors, so all matrices are exact.  The
skew forms are antisymmetrised at the level of each element matrix, which
makes ``N + N^T`` vanish to round-off regardless of the rule.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .feec import FESpace, FieldSpace, SpaceKind, as_field_space, complex_operator, complex_step_jacobian
from .quadrature import simplex_rule

# entries of (nc, nq, nloc, ncomp, dim) blocks per chunk
_CHUNK_BUDGET = 4_000_000


def _chunks(mesh, nq, nloc):
    size = max(1, _CHUNK_BUDGET // max(1, nq * nloc * 9))
    nc = mesh.num_cells
    for start in range(0, nc, size):
        yield np.arange(start, min(nc, start + size))


def physical_weights(mesh, rule, cells):
    X = mesh.vertices[mesh.cells[cells]]
    J = X[:, 1:, :] - X[:, :1, :]
    detJ = np.abs(np.linalg.det(J))
    return detJ[:, None] * rule.weights[None, :]


def _assemble(test_fs, trial_fs, degree, local, *, test_flags=None, trial_flags=None, extra=None):
    """Generic cell loop.  ``local(tt, tr, w, cells)`` returns (nc, ntest, ntrial)."""
    mesh = test_fs.mesh
    rule = simplex_rule(mesh.dim, degree)
    test_flags = test_flags or {}
    trial_flags = trial_flags or {}
    rows, cols, data = [], [], []
    nloc = 12 if mesh.dim == 2 else 20
    for cells in _chunks(mesh, rule.num_points, nloc):
        tt = test_fs.tabulate(rule.points, cells, **test_flags)
        tr = tt if (trial_fs is test_fs and test_flags == trial_flags) else trial_fs.tabulate(
            rule.points, cells, **trial_flags
        )
        w = physical_weights(mesh, rule, cells)
        A = local(tt, tr, w, cells)
        nt, nr = A.shape[1:]
        rows.append(np.broadcast_to(tt.dofs[:, :, None], A.shape).ravel())
        cols.append(np.broadcast_to(tr.dofs[:, None, :], A.shape).ravel())
        data.append(A.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    M = sp.coo_matrix((data, (rows, cols)), shape=(test_fs.ndofs, trial_fs.ndofs)).tocsr()
    M.sum_duplicates()
    M.sort_indices()
    return M


def _scalar_fs(space):
    if isinstance(space, FieldSpace):
        return space
    return FieldSpace.single(space, (0,), 1) if space.ncomp == 1 else FieldSpace.single(space)


def mass_matrix(space, degree: int | None = None) -> sp.csr_matrix:
    fs = _scalar_fs(space)
    deg = 2 * fs.degree if degree is None else degree
    return _assemble(
        fs, fs, deg, lambda tt, tr, w, c: np.einsum("cq,cqik,cqjk->cij", w, tt.vals, tr.vals)
    )


def coupling_mass_matrix(test, trial, degree: int | None = None) -> sp.csr_matrix:
    tfs, rfs = _scalar_fs(test), _scalar_fs(trial)
    deg = tfs.degree + rfs.degree if degree is None else degree
    return _assemble(
        tfs, rfs, deg, lambda tt, tr, w, c: np.einsum("cq,cqik,cqjk->cij", w, tt.vals, tr.vals)
    )


def stiffness_matrix(space, degree: int | None = None) -> sp.csr_matrix:
    fs = _scalar_fs(space)
    if not fs.is_h1:
        raise ValueError("stiffness matrix needs an H1-conforming space")
    deg = 2 * (fs.degree - 1) if degree is None else degree
    return _assemble(
        fs,
        fs,
        max(deg, 0),
        lambda tt, tr, w, c: np.einsum("cq,cqikd,cqjkd->cij", w, tt.grads, tr.grads),
        test_flags={"grads": True},
        trial_flags={"grads": True},
    )


def div_pressure_matrix(velocity, pressure) -> sp.csr_matrix:
    """Rows: pressure dofs q; columns: velocity dofs phi; entries int q div(phi)."""
    V = as_field_space(velocity)
    Q = _scalar_fs(pressure)
    deg = V.degree - 1 + Q.degree
    return _assemble(
        Q,
        V,
        deg,
        lambda tt, tr, w, c: np.einsum("cq,cqi,cqj->cij", w, tt.vals[..., 0], tr.divs),
        trial_flags={"divs": True},
    )


def _coefficient_table(fs: FieldSpace, x, rule, cells, grads=False):
    t = fs.tabulate(rule.points, cells, grads=grads)
    return fs.evaluate(x, t)


def convection_matrix(velocity, w: np.ndarray) -> sp.csr_matrix:
    """Skew form 1/2 [((w.grad) u, phi) - ((w.grad) phi, u)] with frozen w."""
    V = as_field_space(velocity)
    d = V.mesh.dim
    deg = 3 * V.degree - 1

    def local(tt, tr, wts, cells):
        wq = V.evaluate(w, tt)[..., :d]
        adv = np.einsum("cqjkd,cqd->cqjk", tt.grads, wq)
        A = np.einsum("cq,cqjk,cqik->cij", wts, adv, tt.vals)
        return 0.5 * (A - np.transpose(A, (0, 2, 1)))

    return _assemble(V, V, deg, local, test_flags={"grads": True})


def cross_matrix(trial, test, B_space, B: np.ndarray) -> sp.csr_matrix:
    """K[i, j] = int (psi_j x B) . phi_i with psi_j in ``trial``, phi_i in ``test``."""
    R = as_field_space(trial)
    T = as_field_space(test)
    Bfs = as_field_space(B_space)
    deg = R.degree + T.degree + Bfs.degree
    rule = simplex_rule(T.mesh.dim, deg)

    def local(tt, tr, wts, cells):
        Bq = _coefficient_table(Bfs, B, rule, cells)
        cr = np.cross(tr.vals, Bq[:, :, None, :])
        return np.einsum("cq,cqjk,cqik->cij", wts, cr, tt.vals)

    return _assemble(T, R, deg, local)


def curl_pairing_quadrature(X_space, B_space) -> sp.csr_matrix:
    """P[i, j] = int psi_i . curl(omega_j) by direct quadrature."""
    X = as_field_space(X_space)
    Bfs = as_field_space(B_space)
    deg = Bfs.degree + max(X.degree - 1, 0)
    return _assemble(
        Bfs,
        X,
        deg,
        lambda tt, tr, w, c: np.einsum("cq,cqik,cqjk->cij", w, tt.vals, tr.curls),
        trial_flags={"curls": True},
    )


def _p1_cell_moments(mesh):
    """Q[i, K] = int_K lambda_i (P1 test functions against cell indicators)."""
    nc = mesh.num_cells
    vol = mesh.volumes()
    rows = mesh.cells.ravel()
    cols = np.repeat(np.arange(nc), mesh.dim + 1)
    vals = np.repeat(vol / (mesh.dim + 1), mesh.dim + 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.num_vertices, nc))


def curl_pairing(X_space, B_space) -> sp.csr_matrix:
    """P[i, j] = <psi_i, curl omega_j>, built from incidence matrices.

    3D: ``M_RT @ C``.  2.5D product spaces: the in-plane flux block is
    ``M_RT @ perp-grad`` (acting on the z-component of the edge field) and
    the out-of-plane block pairs P1 test functions with ``rot`` of the
    in-plane edge field.
    """
    X = as_field_space(X_space)
    Bfs = as_field_space(B_space)
    mesh = X.mesh
    blocks = [[None] * len(X.pieces) for _ in Bfs.pieces]
    for bi, (bs, bcomps) in enumerate(Bfs.pieces):
        for xi, (xs, xcomps) in enumerate(X.pieces):
            blk = None
            if bs.kind is SpaceKind.RT and xs.kind is SpaceKind.NED and mesh.dim == 3:
                blk = mass_matrix(bs) @ complex_operator(xs, bs)
            elif bs.kind is SpaceKind.RT and xs.kind is SpaceKind.P1 and xcomps == (2,):
                blk = mass_matrix(bs) @ complex_operator(xs, bs)
            elif bs.kind is SpaceKind.P1 and bcomps == (2,) and xs.kind is SpaceKind.NED:
                rot = complex_operator(xs, FESpace(mesh, SpaceKind.DG0))
                blk = _p1_cell_moments(mesh) @ sp.diags(1.0 / mesh.volumes()) @ rot
            if blk is None:
                blk = sp.csr_matrix((bs.ndofs, xs.ndofs))
            blocks[bi][xi] = blk
    return sp.bmat(blocks, format="csr")


def load_vector(space, f, degree: int | None = None) -> np.ndarray:
    """b_i = int f . phi_i; ``f`` maps (N, dim) points to (N,) or (N, m)."""
    fs = _scalar_fs(space)
    mesh = fs.mesh
    deg = fs.degree + 8 if degree is None else degree
    rule = simplex_rule(mesh.dim, deg)
    b = np.zeros(fs.ndofs)
    if f is None:
        return b
    for cells in _chunks(mesh, rule.num_points, 12):
        t = fs.tabulate(rule.points, cells)
        X = mesh.vertices[mesh.cells[cells]]
        pts = np.einsum("qi,cik->cqk", rule.points, X)
        val = np.asarray(f(pts.reshape(-1, mesh.dim)), dtype=float)
        if val.ndim == 1:
            val = val[:, None]
        val = val.reshape(len(cells), rule.num_points, -1)
        nt = fs.ncomp_total
        if val.shape[-1] < nt:
            val = np.concatenate(
                [val, np.zeros(val.shape[:2] + (nt - val.shape[-1],))], axis=-1
            )
        w = physical_weights(mesh, rule, cells)
        loc = np.einsum("cq,cqk,cqik->ci", w, val[..., :nt], t.vals)
        np.add.at(b, t.dofs.ravel(), loc.ravel())
    return b


def gradient_load_vector(space, f, degree: int | None = None) -> np.ndarray:
    """b_i = int grad f : grad phi_i, with grad f by complex-step differentiation."""
    fs = _scalar_fs(space)
    mesh = fs.mesh
    d = mesh.dim
    deg = fs.degree + 8 if degree is None else degree
    rule = simplex_rule(d, deg)
    b = np.zeros(fs.ndofs)
    nt = fs.ncomp_total
    for cells in _chunks(mesh, rule.num_points, 12):
        t = fs.tabulate(rule.points, cells, grads=True)
        X = mesh.vertices[mesh.cells[cells]]
        pts = np.einsum("qi,cik->cqk", rule.points, X).reshape(-1, d)
        jac = complex_step_jacobian(f, pts)
        g = np.zeros((len(pts), nt, d))
        m = min(nt, jac.shape[1])
        g[:, :m] = jac[:, :m]
        g = g.reshape(len(cells), rule.num_points, nt, d)
        w = physical_weights(mesh, rule, cells)
        loc = np.einsum("cq,cqkd,cqikd->ci", w, g, t.grads)
        np.add.at(b, t.dofs.ravel(), loc.ravel())
    return b


def integrate(mesh, f, degree: int = 10) -> float:
    rule = simplex_rule(mesh.dim, degree)
    X = mesh.cell_coordinates()
    pts = np.einsum("qi,cik->cqk", rule.points, X).reshape(-1, mesh.dim)
    val = np.asarray(f(pts), dtype=float).reshape(mesh.num_cells, -1)
    w = physical_weights(mesh, rule, np.arange(mesh.num_cells))
    return float(np.sum(w * val))


__all__ = [
    "mass_matrix",
    "coupling_mass_matrix",
    "stiffness_matrix",
    "div_pressure_matrix",
    "convection_matrix",
    "cross_matrix",
    "curl_pairing",
    "curl_pairing_quadrature",
    "load_vector",
    "gradient_load_vector",
    "integrate",
    "physical_weights",
]
