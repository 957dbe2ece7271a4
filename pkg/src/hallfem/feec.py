"""Lowest-order finite element spaces of the discrete de Rham complex.

Whitney forms are written directly in physical coordinates through the
barycentric coordinates of each cell.  This realises the covariant Piola map
for edge elements (``lam_a grad lam_b - lam_b grad lam_a``) and the
contravariant one for face elements (``(x - x_k) / (d |K|)``) without an
explicit reference element.

Degrees of freedom:

* ``P1``   vertex values
* ``MINI`` vertex values plus one unscaled cell bubble ``prod(lam)`` per component
* ``NED``  tangential line integrals along ascending-index edges
* ``RT``   normal fluxes through facets; in 3D the normal of face
  ``(v0<v1<v2)`` is ``(x1-x0) x (x2-x0)``, in 2D the edge tangent rotated
  clockwise, so that ``perp-grad`` has the same incidence as ``grad``
* ``DG0``  cell averages

Incidence matrices act on integrated cochains; the top-degree operators
(``div``, ``rot``) therefore return cell integrals and are divided by the
cell volume to obtain DG0 averages.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, SimplicialMesh
from .quadrature import simplex_rule

log = logging.getLogger(__name__)


class SpaceKind(enum.Enum):
    P1 = "P1"
    MINI = "MINI"
    NED = "NED"
    RT = "RT"
    DG0 = "DG0"


class UnsupportedSpaceError(ValueError):
    pass


class TraceViolationWarning(UserWarning):
    pass


_CHAIN_SIGNS = {(0, 1): 1, (1, 2): 1, (0, 2): -1}
# tri (a<b<c): boundary a->b->c->a


@dataclass
class BasisTable:
    """Basis functions of one space tabulated on a block of cells."""

    cells: np.ndarray
    dofs: np.ndarray  # (nc, nloc) global dof indices
    vals: np.ndarray  # (nc, nq, nloc, ncomp)
    weights: np.ndarray  # (nc, nq) physical quadrature weights (may be None)
    grads: np.ndarray | None = None  # (nc, nq, nloc, ncomp, dim)
    divs: np.ndarray | None = None  # (nc, nq, nloc)
    curls: np.ndarray | None = None  # (nc, nq, nloc, 3) or (..., 1) for 2D rot


def _cell_geometry(mesh: SimplicialMesh, cells: np.ndarray):
    X = mesh.vertices[mesh.cells[cells]]
    J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))
    Jinv = np.linalg.inv(J)
    G = np.empty((len(cells), mesh.dim + 1, mesh.dim))
    G[:, 1:, :] = Jinv
    G[:, 0, :] = -Jinv.sum(axis=1)
    vol = np.abs(np.linalg.det(J)) / (2.0 if mesh.dim == 2 else 6.0)
    return X, G, vol


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class FESpace:
    """A single finite element space with its dof numbering (the dof map)."""

    def __init__(self, mesh: SimplicialMesh, kind: SpaceKind, bc: str = "free"):
        if bc not in ("free", "zero", "mean"):
            raise ValueError(f"unknown boundary condition {bc!r}")
        if bc == "mean" and kind is not SpaceKind.P1:
            raise UnsupportedSpaceError("zero-mean constraint is only provided for P1")
        if bc == "zero" and kind is SpaceKind.DG0:
            raise UnsupportedSpaceError("DG0 has no trace to constrain")
        self.mesh = mesh
        self.kind = kind
        self.bc = bc
        d = mesh.dim
        nv, nc = mesh.num_vertices, mesh.num_cells

        if kind is SpaceKind.P1:
            self.ncomp = 1
            self.ndofs = nv
            self.cell_dofs = mesh.cells.copy()
            self.cell_signs = np.ones_like(self.cell_dofs)
            constrained = mesh.boundary_vertices.copy() if bc == "zero" else np.zeros(nv, bool)
        elif kind is SpaceKind.MINI:
            self.ncomp = d
            block = nv + nc
            self.ndofs = d * block
            scalar = np.concatenate([mesh.cells, nv + np.arange(nc)[:, None]], axis=1)
            self.cell_dofs = np.concatenate([scalar + c * block for c in range(d)], axis=1)
            self.cell_signs = np.ones_like(self.cell_dofs)
            one = np.zeros(block, bool)
            if bc == "zero":
                one[:nv] = mesh.boundary_vertices
            constrained = np.tile(one, d)
        elif kind is SpaceKind.NED:
            self.ncomp = d
            self.ndofs = mesh.num_edges
            self.cell_dofs = mesh.cell_edges.copy()
            self.cell_signs = mesh.cell_edge_signs.copy()
            constrained = mesh.boundary_edges.copy() if bc == "zero" else np.zeros(self.ndofs, bool)
        elif kind is SpaceKind.RT:
            self.ncomp = d
            if d == 2:
                self.ndofs = mesh.num_edges
                self.cell_dofs = mesh.cell_edges.copy()
                self.cell_signs = mesh.cell_edge_signs.copy()
            else:
                self.ndofs = mesh.num_faces
                self.cell_dofs = mesh.cell_faces.copy()
                self.cell_signs = mesh.cell_face_signs.copy()
            constrained = (
                mesh.boundary_facets.copy() if bc == "zero" else np.zeros(self.ndofs, bool)
            )
        elif kind is SpaceKind.DG0:
            self.ncomp = 1
            self.ndofs = nc
            self.cell_dofs = np.arange(nc)[:, None]
            self.cell_signs = np.ones_like(self.cell_dofs)
            constrained = np.zeros(nc, bool)
        else:  # pragma: no cover
            raise UnsupportedSpaceError(kind)
        self.constrained = constrained
        self.free = np.flatnonzero(~constrained)

    def __repr__(self):
        return f"FESpace({self.kind.value}, bc={self.bc}, dim={self.mesh.dim}, ndofs={self.ndofs})"

    @property
    def has_mean_multiplier(self) -> bool:
        return self.bc == "mean"

    @property
    def is_h1(self) -> bool:
        return self.kind in (SpaceKind.P1, SpaceKind.MINI)

    @property
    def degree(self) -> int:
        """Polynomial degree of the local basis (for quadrature selection)."""
        if self.kind is SpaceKind.MINI:
            return self.mesh.dim + 1
        return 0 if self.kind is SpaceKind.DG0 else 1

    def tabulate(self, bary, cells=None, *, derivatives: bool = True) -> BasisTable:
        """Evaluate the local basis at barycentric points.

        ``bary`` is either one set of points shared by all cells, shape
        (nq, dim+1), or per-cell points of shape (ncells, nq, dim+1).
        """
        mesh = self.mesh
        d = mesh.dim
        cells = np.arange(mesh.num_cells) if cells is None else np.asarray(cells)
        X, G, vol = _cell_geometry(mesh, cells)
        nc = len(cells)
        lam = np.asarray(bary, dtype=float)
        if lam.ndim == 2:
            lam = np.broadcast_to(lam, (nc,) + lam.shape)
        nq = lam.shape[1]
        dofs = self.cell_dofs[cells]
        signs = self.cell_signs[cells].astype(float)
        grads = divs = curls = None
        kind = self.kind

        if kind is SpaceKind.P1:
            vals = lam[..., None].copy()
            if derivatives:
                grads = np.broadcast_to(G[:, None, :, None, :], (nc, nq, d + 1, 1, d)).copy()
        elif kind is SpaceKind.MINI:
            bub = np.prod(lam, axis=2)
            scal = np.concatenate([lam, bub[..., None]], axis=2)  # (nc,nq,d+2)
            ns = d + 2
            vals = np.zeros((nc, nq, d * ns, d))
            for c in range(d):
                vals[:, :, c * ns:(c + 1) * ns, c] = scal
            if derivatives:
                sg = np.empty((nc, nq, ns, d))
                sg[:, :, : d + 1, :] = G[:, None, :, :]
                dbub = np.zeros((nc, nq, d))
                for i in range(d + 1):
                    others = np.prod(np.delete(lam, i, axis=2), axis=2)
                    dbub += others[..., None] * G[:, None, i, :]
                sg[:, :, d + 1, :] = dbub
                grads = np.zeros((nc, nq, d * ns, d, d))
                for c in range(d):
                    grads[:, :, c * ns:(c + 1) * ns, c, :] = sg
        elif kind is SpaceKind.NED or (kind is SpaceKind.RT and d == 2):
            le = LOCAL_EDGES[d]
            a, b = le[:, 0], le[:, 1]
            w = (
                lam[:, :, a, None] * G[:, None, b, :]
                - lam[:, :, b, None] * G[:, None, a, :]
            ) * signs[:, None, :, None]
            if d == 3:
                cw = 2.0 * np.cross(G[:, a, :], G[:, b, :]) * signs[:, :, None]
            else:
                cw = (2.0 * _cross2(G[:, a, :], G[:, b, :]) * signs)[..., None]
            cw = np.broadcast_to(cw[:, None], (nc, nq) + cw.shape[1:]).copy()
            if kind is SpaceKind.NED:
                vals = w
                if derivatives:
                    curls = cw
            else:
                # rotate clockwise: (a, b) -> (b, -a); div(R w) = rot w
                vals = np.stack([w[..., 1], -w[..., 0]], axis=-1)
                if derivatives:
                    divs = cw[..., 0]
        elif kind is SpaceKind.RT:
            x = np.einsum("cqi,cik->cqk", lam, X)
            vals = (x[:, :, None, :] - X[:, None, :, :]) / (3.0 * vol[:, None, None, None])
            vals *= signs[:, None, :, None]
            if derivatives:
                divs = np.broadcast_to((signs / vol[:, None])[:, None, :], (nc, nq, 4)).copy()
        elif kind is SpaceKind.DG0:
            vals = np.ones((nc, nq, 1, 1))
            if derivatives:
                grads = np.zeros((nc, nq, 1, 1, d))
        else:  # pragma: no cover
            raise UnsupportedSpaceError(kind)
        return BasisTable(cells, dofs, vals, None, grads, divs, curls)


class FieldSpace:
    """Product of FE spaces embedded into three-component vector fields.

    Each piece ``(space, comps)`` supplies the listed Cartesian components.
    Fields are z-invariant in 2D, so ``d/dz`` vanishes in every derivative.
    A scalar field that is not embedded in R^3 uses ``comps=(0,)`` and
    ``ncomp_total=1``.
    """

    def __init__(self, pieces, ncomp_total: int = 3):
        self.pieces = tuple((space, tuple(comps)) for space, comps in pieces)
        meshes = {id(s.mesh) for s, _ in self.pieces}
        if len(meshes) != 1:
            raise ValueError("all pieces must live on one mesh")
        self.mesh = self.pieces[0][0].mesh
        self.ncomp_total = ncomp_total
        sizes = [s.ndofs for s, _ in self.pieces]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.ndofs = int(self.offsets[-1])
        self.constrained = np.concatenate([s.constrained for s, _ in self.pieces])
        self.free = np.flatnonzero(~self.constrained)

    @classmethod
    def single(cls, space: FESpace, comps=None, ncomp_total=None):
        if comps is None:
            comps = tuple(range(space.ncomp))
        if ncomp_total is None:
            ncomp_total = 3 if space.ncomp > 1 else 1
        return cls([(space, comps)], ncomp_total)

    def __repr__(self):
        inner = ", ".join(f"{s.kind.value}[{','.join(map(str, c))}]" for s, c in self.pieces)
        return f"FieldSpace({inner}; ndofs={self.ndofs})"

    @property
    def degree(self) -> int:
        return max(s.degree for s, _ in self.pieces)

    @property
    def is_h1(self) -> bool:
        return all(s.is_h1 for s, _ in self.pieces)

    def piece_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[self.piece_slice(i)] for i in range(len(self.pieces))]

    def tabulate(self, bary, cells=None, *, grads=False, divs=False, curls=False) -> BasisTable:
        d = self.mesh.dim
        nt = self.ncomp_total
        parts = []
        for i, (space, comps) in enumerate(self.pieces):
            t = space.tabulate(bary, cells, derivatives=grads or divs or curls)
            parts.append((i, space, comps, t))
        cells_ = parts[0][3].cells
        nc, nq = parts[0][3].vals.shape[:2]
        nloc = sum(t.vals.shape[2] for *_, t in parts)
        dofs = np.concatenate([t.dofs + self.offsets[i] for i, _, _, t in parts], axis=1)
        vals = np.zeros((nc, nq, nloc, nt))
        G = np.zeros((nc, nq, nloc, nt, d)) if grads else None
        D = np.zeros((nc, nq, nloc)) if divs else None
        C = np.zeros((nc, nq, nloc, 3)) if curls else None
        start = 0
        for _, space, comps, t in parts:
            m = t.vals.shape[2]
            sl = slice(start, start + m)
            for j, c in enumerate(comps):
                vals[:, :, sl, c] = t.vals[..., j]
            if grads:
                if t.grads is None:
                    raise UnsupportedSpaceError(f"{space} has no gradient")
                for j, c in enumerate(comps):
                    G[:, :, sl, c, :] = t.grads[:, :, :, j, :]
            if space.is_h1:
                if divs or curls:
                    full = np.zeros((nc, nq, m, 3, 3))
                    for j, c in enumerate(comps):
                        full[:, :, :, c, :d] = t.grads[:, :, :, j, :]
                    if divs:
                        D[:, :, sl] = np.trace(full, axis1=3, axis2=4)
                    if curls:
                        C[:, :, sl, 0] = full[..., 2, 1] - full[..., 1, 2]
                        C[:, :, sl, 1] = full[..., 0, 2] - full[..., 2, 0]
                        C[:, :, sl, 2] = full[..., 1, 0] - full[..., 0, 1]
            elif space.kind is SpaceKind.RT:
                if divs:
                    D[:, :, sl] = t.divs
                if curls:
                    raise UnsupportedSpaceError("RT fields carry no curl")
            elif space.kind is SpaceKind.NED:
                if curls:
                    if d == 3:
                        C[:, :, sl, :] = t.curls
                    else:
                        C[:, :, sl, 2] = t.curls[..., 0]
                if divs:
                    raise UnsupportedSpaceError("edge fields carry no divergence")
            start += m
        return BasisTable(cells_, dofs, vals, None, G, D, C)

    def evaluate(self, x: np.ndarray, table: BasisTable) -> np.ndarray:
        return np.einsum("cqlk,cl->cqk", table.vals, x[table.dofs])

    def evaluate_grad(self, x: np.ndarray, table: BasisTable) -> np.ndarray:
        return np.einsum("cqlkd,cl->cqkd", table.grads, x[table.dofs])


def as_field_space(space) -> FieldSpace:
    return space if isinstance(space, FieldSpace) else FieldSpace.single(space)


def build_space(mesh: SimplicialMesh, kind, bc: str = "free") -> FESpace:
    if isinstance(kind, str):
        kind = SpaceKind(kind)
    return FESpace(mesh, kind, bc)


# ---------------------------------------------------------------- incidence


def _grad_incidence(mesh):
    ne = mesh.num_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1, 1], ne)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.num_vertices), dtype=np.int64)


def _edge_index(mesh):
    nv = mesh.num_vertices
    key = mesh.edges[:, 0] * nv + mesh.edges[:, 1]
    order = np.argsort(key)
    return key[order], order


def _boundary_chain(mesh, tris):
    """Signed edge incidence of oriented triangles (a<b<c)."""
    nv = mesh.num_vertices
    keys, order = _edge_index(mesh)
    rows, cols, vals = [], [], []
    for (i, j), s in _CHAIN_SIGNS.items():
        k = tris[:, i] * nv + tris[:, j]
        cols.append(order[np.searchsorted(keys, k)])
        rows.append(np.arange(len(tris)))
        vals.append(np.full(len(tris), s))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _curl_incidence(mesh):
    r, c, v = _boundary_chain(mesh, mesh.faces)
    return sp.csr_matrix((v, (r, c)), shape=(mesh.num_faces, mesh.num_edges), dtype=np.int64)


def _div_incidence(mesh):
    nc = mesh.num_cells
    if mesh.dim == 3:
        rows = np.repeat(np.arange(nc), 4)
        return sp.csr_matrix(
            (mesh.cell_face_signs.ravel(), (rows, mesh.cell_faces.ravel())),
            shape=(nc, mesh.num_faces),
            dtype=np.int64,
        )
    return _rot_incidence(mesh)


def _rot_incidence(mesh):
    """2D: circulation of each edge basis around the ccw cell boundary."""
    nc = mesh.num_cells
    local = np.array([_CHAIN_SIGNS[tuple(e)] for e in LOCAL_EDGES[2]])
    vals = (mesh.cell_edge_signs * local[None, :]).ravel()
    rows = np.repeat(np.arange(nc), 3)
    return sp.csr_matrix(
        (vals, (rows, mesh.cell_edges.ravel())), shape=(nc, mesh.num_edges), dtype=np.int64
    )


class NonAdjacentSpacesError(ValueError):
    pass


def complex_operator(source: FESpace, target: FESpace) -> sp.csr_matrix:
    """Integer incidence matrix of the exterior derivative between two spaces.

    Supported pairs: P1->NED (grad), NED->RT (curl, 3D), RT->DG0 (div),
    and in 2D P1->RT (perp-grad) and NED->DG0 (rot).  Boundary-constrained
    dofs are not removed; restrict rows/columns with ``space.free``.
    """
    if source.mesh is not target.mesh:
        raise NonAdjacentSpacesError("spaces live on different meshes")
    mesh = source.mesh
    pair = (source.kind, target.kind)
    K = SpaceKind
    if pair == (K.P1, K.NED):
        return _grad_incidence(mesh)
    if pair == (K.NED, K.RT) and mesh.dim == 3:
        return _curl_incidence(mesh)
    if pair == (K.RT, K.DG0):
        return _div_incidence(mesh)
    if pair == (K.P1, K.RT) and mesh.dim == 2:
        return _grad_incidence(mesh)
    if pair == (K.NED, K.DG0) and mesh.dim == 2:
        return _rot_incidence(mesh)
    raise NonAdjacentSpacesError(
        f"{source.kind.value}->{target.kind.value} is not a differential in {mesh.dim}D"
    )


def cell_divergence(space: FESpace, B: np.ndarray) -> np.ndarray:
    """Piecewise-constant divergence of an RT field (one value per cell)."""
    D = complex_operator(space, FESpace(space.mesh, SpaceKind.DG0))
    return (D @ B) / space.mesh.volumes()


# ------------------------------------------------------------- evaluation


def evaluate_field(space, x: np.ndarray, cell: int, bary) -> np.ndarray:
    """Value of a finite element function at one barycentric point of a cell."""
    fs = as_field_space(space)
    if not 0 <= cell < fs.mesh.num_cells:
        raise IndexError(f"cell {cell} out of range")
    bary = np.asarray(bary, dtype=float)
    if np.any(bary < -1e-14) or abs(bary.sum() - 1.0) > 1e-12:
        raise ValueError("barycentric coordinates must be nonnegative and sum to one")
    t = fs.tabulate(bary[None, :], [cell])
    val = fs.evaluate(x, t)[0, 0]
    if isinstance(space, FESpace):
        comps = fs.pieces[0][1]
        val = val[list(comps)]
        return val[0] if space.ncomp == 1 else val
    return val


def evaluate_at_points(space, x: np.ndarray, points: np.ndarray, cells=None) -> np.ndarray:
    """Evaluate a field at physical points (located by the structured grid)."""
    fs = as_field_space(space)
    mesh = fs.mesh
    points = np.atleast_2d(points)
    if cells is None:
        cells = mesh.locate(points)
    bary = mesh.to_barycentric(cells, points)
    t = fs.tabulate(bary[:, None, :], cells)
    return fs.evaluate(x, t)[:, 0, :]


# ---------------------------------------------------------- interpolation


def complex_step_jacobian(f, points: np.ndarray, h: float = 1e-30) -> np.ndarray:
    """Jacobian of a complex-analytic field, shape (N, m, dim)."""
    points = np.asarray(points, dtype=float)
    N, d = points.shape
    cols = []
    for k in range(d):
        z = points.astype(complex)
        z[:, k] += 1j * h
        val = np.asarray(f(z))
        if val.ndim == 1:
            val = val[:, None]
        cols.append(val.imag / h)
    return np.stack(cols, axis=-1)


def analytic_curl(A, dim: int):
    """curl of a z-invariant (2D) or general (3D) three-component field."""

    def curl(x):
        Jac = complex_step_jacobian(A, np.real(x))
        out = np.zeros((len(Jac), 3))
        g = np.zeros((len(Jac), 3, 3))
        g[:, : Jac.shape[1], :dim] = Jac
        out[:, 0] = g[:, 2, 1] - g[:, 1, 2]
        out[:, 1] = g[:, 0, 2] - g[:, 2, 0]
        out[:, 2] = g[:, 1, 0] - g[:, 0, 1]
        return out

    return curl


def analytic_divergence(f, dim: int):
    def div(x):
        Jac = complex_step_jacobian(f, np.real(x))
        return sum(Jac[:, k, k] for k in range(dim))

    return div


_LINE = simplex_rule(1, 19)
_TRI = simplex_rule(2, 12)


def _eval(f, pts, ncomp):
    val = np.asarray(f(pts), dtype=float)
    if val.ndim == 1:
        val = val[:, None]
    return val[:, :ncomp] if val.shape[1] >= ncomp else val


def _interp_single(space: FESpace, f, comps) -> np.ndarray:
    mesh = space.mesh
    d = mesh.dim
    V = mesh.vertices
    kind = space.kind
    if kind is SpaceKind.P1:
        val = np.asarray(f(V), dtype=float)
        return val if val.ndim == 1 else val[:, comps[0]]
    if kind is SpaceKind.MINI:
        val = np.asarray(f(V), dtype=float)
        block = mesh.num_vertices + mesh.num_cells
        out = np.zeros(space.ndofs)
        for c in range(d):
            out[c * block:c * block + mesh.num_vertices] = val[:, comps[c]]
        return out
    if kind is SpaceKind.DG0:
        rule = simplex_rule(d, 10)
        X = mesh.cell_coordinates()
        pts = np.einsum("qi,cik->cqk", rule.points, X).reshape(-1, d)
        val = np.asarray(f(pts), dtype=float)
        if val.ndim > 1:
            val = val[:, comps[0]]
        val = val.reshape(mesh.num_cells, -1)
        return val @ rule.weights / rule.weights.sum()
    if kind is SpaceKind.NED or (kind is SpaceKind.RT and d == 2):
        a = V[mesh.edges[:, 0]]
        b = V[mesh.edges[:, 1]]
        t = b - a
        vec = t if kind is SpaceKind.NED else np.stack([t[:, 1], -t[:, 0]], axis=1)
        pts = np.einsum("qi,eik->eqk", _LINE.points, np.stack([a, b], axis=1))
        val = np.asarray(f(pts.reshape(-1, d)), dtype=float)[:, list(comps)]
        val = val.reshape(len(t), -1, d)
        return np.einsum("eqk,ek,q->e", val, vec, _LINE.weights)
    if kind is SpaceKind.RT:
        P = V[mesh.faces]
        N = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
        pts = np.einsum("qi,fik->fqk", _TRI.points, P)
        val = np.asarray(f(pts.reshape(-1, 3)), dtype=float)[:, list(comps)]
        val = val.reshape(len(P), -1, 3)
        return np.einsum("fqk,fk,q->f", val, N, _TRI.weights)
    raise UnsupportedSpaceError(kind)  # pragma: no cover


def canonical_interpolate(space, f, *, trace_tol: float = 1e-10) -> np.ndarray:
    """Canonical interpolant: vertex values, edge/face moments, cell averages.

    ``f`` maps points (N, dim) to values (N,) or (N, m).  For product spaces
    each piece takes the components it embeds.  Boundary dofs of zero-trace
    spaces keep their computed values; if they are not negligible a
    :class:`TraceViolationWarning` is emitted and the dof is kept.
    """
    fs = as_field_space(space)
    out = np.zeros(fs.ndofs)
    for i, (s, comps) in enumerate(fs.pieces):
        vals = _interp_single(s, f, comps)
        if s.bc == "zero":
            bad = np.abs(vals[s.constrained])
            if bad.size and bad.max() > trace_tol:
                warnings.warn(
                    f"{s.kind.value} interpolant violates the zero trace "
                    f"(max boundary dof {bad.max():.3e})",
                    TraceViolationWarning,
                    stacklevel=2,
                )
        out[fs.piece_slice(i)] = vals
    return out


def interpolate_curl(space, A, *, trace_tol: float = 1e-10) -> np.ndarray:
    """Face interpolant of ``curl A`` through the commuting diagram.

    Fluxes are computed as circulations of ``A`` (Stokes), so the result is
    exactly divergence-free up to round-off.  ``A`` returns three components.
    For 2D product spaces ``(RT, P1 on z)`` the in-plane part is ``perp-grad``
    of the vertex values of ``A_z`` and the out-of-plane part is the nodal
    interpolant of ``rot A~``.

    For zero-flux face spaces the potential is interpolated with zero
    tangential trace, which keeps the result solenoidal inside the
    constrained space.  Discarded boundary fluxes above ``trace_tol`` raise
    a :class:`TraceViolationWarning`.
    """
    fs = as_field_space(space)
    mesh = fs.mesh
    out = np.zeros(fs.ndofs)
    for i, (s, comps) in enumerate(fs.pieces):
        if s.kind is SpaceKind.RT:
            if mesh.dim == 3:
                pot = FESpace(mesh, SpaceKind.NED, s.bc)
                a = _interp_single(pot, A, (0, 1, 2))
            else:
                pot = FESpace(mesh, SpaceKind.P1, s.bc)
                a = np.asarray(A(mesh.vertices), dtype=float)[:, 2]
            op = complex_operator(pot, s)
            vals = op @ a
            if s.bc == "zero":
                a = np.where(pot.constrained, 0.0, a)
                lost = np.abs(vals[s.constrained])
                if lost.size and lost.max() > trace_tol:
                    warnings.warn(
                        f"magnetic datum has nonzero normal trace (max boundary flux {lost.max():.3e}); "
                        "interpolating through the zero-trace potential",
                        TraceViolationWarning,
                        stacklevel=2,
                    )
                vals = op @ a
            out[fs.piece_slice(i)] = vals
        elif s.kind is SpaceKind.P1 and comps == (2,):
            rot = analytic_curl(A, mesh.dim)
            out[fs.piece_slice(i)] = rot(mesh.vertices)[:, 2]
        else:
            raise UnsupportedSpaceError(f"cannot interpolate a curl into {s}")
    return out


# ------------------------------------------------- projections, discrete curl


def l2_project(space, f=None, *, source=None, degree: int | None = None) -> np.ndarray:
    """L2-orthogonal projection onto the (constrained) space.

    Give either an analytic ``f`` or ``source=(other_space, x)`` on the same mesh.
    """
    from . import assembly
    from .sparse_la import SolverConfig, solve

    fs = as_field_space(space)
    if source is not None:
        src_fs, xs = source
        src_fs = as_field_space(src_fs)
        b = assembly.coupling_mass_matrix(fs, src_fs) @ xs
    else:
        b = assembly.load_vector(fs, f, degree=degree)
    M = assembly.mass_matrix(fs)
    free = fs.free
    out = np.zeros(fs.ndofs)
    res = solve(M[free][:, free], b[free], SolverConfig(method="direct"))
    out[free] = res.x
    return out


def discrete_curl(B_space, B: np.ndarray, X_space, *, pairing=None, mass=None) -> np.ndarray:
    """Edge field J with <J, w> = <B, curl w> for all zero-trace edge fields w."""
    from . import assembly
    from .sparse_la import SolverConfig, solve

    Xfs = as_field_space(X_space)
    Bfs = as_field_space(B_space)
    if pairing is None:
        pairing = assembly.curl_pairing(Xfs, Bfs)
    if mass is None:
        mass = assembly.mass_matrix(Xfs)
    free = Xfs.free
    rhs = pairing.T @ B
    J = np.zeros(Xfs.ndofs)
    if np.any(rhs[free]):
        J[free] = solve(mass[free][:, free], rhs[free], SolverConfig(method="direct")).x
    return J
