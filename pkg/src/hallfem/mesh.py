"""Structured simplicial meshes of the unit square and unit cube.

Cells come from the Kuhn (Freudenthal) subdivision of a uniform grid of
squares/cubes: every subcube is split into ``dim!`` simplices, one per
permutation of the coordinate axes.  In 2D this is the diagonal split along
``x = y``.  Cells are stored cube by cube in permutation order, which makes
point location an O(1) arithmetic lookup and guarantees that the meshes for
``n`` and ``k*n`` are nested.

Edges and faces carry the canonical orientation given by ascending global
vertex indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, permutations
from math import factorial

import numpy as np


class InvalidResolutionError(ValueError):
    pass


LOCAL_EDGES = {
    2: np.array(list(combinations(range(3), 2))),
    3: np.array(list(combinations(range(4), 2))),
}


def _perm_code(perm, dim):
    code = 0
    for p in perm:
        code = code * dim + p
    return code


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    dim: int
    n: int
    vertices: np.ndarray  # (nv, dim)
    cells: np.ndarray  # (nc, dim+1), positively oriented
    edges: np.ndarray  # (ne, 2), ascending
    faces: np.ndarray | None  # (nf, 3), ascending; 3D only
    cell_edges: np.ndarray  # (nc, #LOCAL_EDGES)
    cell_edge_signs: np.ndarray
    cell_faces: np.ndarray | None  # (nc, 4): face opposite local vertex i
    cell_face_signs: np.ndarray | None  # +1 where the face normal points out of the cell
    boundary_vertices: np.ndarray = field(repr=False)
    boundary_edges: np.ndarray = field(repr=False)
    boundary_faces: np.ndarray | None = field(repr=False)
    _perm_lookup: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return 0 if self.faces is None else len(self.faces)

    @property
    def facets(self) -> np.ndarray:
        """Codimension-one entities (edges in 2D, faces in 3D)."""
        return self.edges if self.dim == 2 else self.faces

    @property
    def boundary_facets(self) -> np.ndarray:
        return self.boundary_edges if self.dim == 2 else self.boundary_faces

    def cell_coordinates(self) -> np.ndarray:
        return self.vertices[self.cells]

    def jacobians(self) -> np.ndarray:
        X = self.cell_coordinates()
        return np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))

    def signed_volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians()) / factorial(self.dim)

    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes())

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (nc, dim+1, dim)."""
        Jinv = np.linalg.inv(self.jacobians())
        grads = np.empty((self.num_cells, self.dim + 1, self.dim))
        grads[:, 1:, :] = Jinv
        grads[:, 0, :] = -Jinv.sum(axis=1)
        return grads

    def centroids(self) -> np.ndarray:
        return self.cell_coordinates().mean(axis=1)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Index of a cell containing each point (ties broken consistently)."""
        points = np.atleast_2d(points)
        scaled = points * self.n
        cube = np.clip(np.floor(scaled).astype(np.int64), 0, self.n - 1)
        local = scaled - cube
        order = np.argsort(-local, axis=1, kind="stable")
        code = np.zeros(len(points), dtype=np.int64)
        for k in range(self.dim):
            code = code * self.dim + order[:, k]
        lin = np.zeros(len(points), dtype=np.int64)
        for k in reversed(range(self.dim)):
            lin = lin * self.n + cube[:, k]
        return lin * factorial(self.dim) + self._perm_lookup[code]

    def to_barycentric(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        X = self.vertices[self.cells[cells]]
        J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))
        lam = np.linalg.solve(J, (points - X[:, 0, :])[..., None])[..., 0]
        return np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)


def build_unit_box_mesh(n: int, dim: int) -> SimplicialMesh:
    """Kuhn triangulation of [0,1]^dim with ``n`` cells per edge."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if n < 1:
        raise InvalidResolutionError(f"need at least one cell per edge, got n={n}")

    # vertex index = i + (n+1) j + (n+1)^2 k, coordinates exactly i/n
    stride = (n + 1) ** np.arange(dim)
    vertices = np.zeros(((n + 1) ** dim, dim))
    idx = np.arange((n + 1) ** dim)
    for k in range(dim):
        vertices[:, k] = (idx // stride[k]) % (n + 1) / n

    perms = list(permutations(range(dim)))
    perm_lookup = np.full(dim**dim, -1, dtype=np.int64)
    for p_idx, perm in enumerate(perms):
        perm_lookup[_perm_code(perm, dim)] = p_idx

    cube_index = np.stack(
        np.meshgrid(*[np.arange(n)] * dim, indexing="ij"), axis=-1
    ).reshape(-1, dim)
    # order cubes with axis 0 fastest, matching locate()
    lin = np.zeros(len(cube_index), dtype=np.int64)
    for k in reversed(range(dim)):
        lin = lin * n + cube_index[:, k]
    cube_index = cube_index[np.argsort(lin)]
    base = cube_index @ stride

    cells = np.empty((len(base), len(perms), dim + 1), dtype=np.int64)
    for p_idx, perm in enumerate(perms):
        cur = base.copy()
        cells[:, p_idx, 0] = cur
        for step, axis in enumerate(perm):
            cur = cur + stride[axis]
            cells[:, p_idx, step + 1] = cur
    cells = cells.reshape(-1, dim + 1)

    X = vertices[cells]
    det = np.linalg.det(np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1)))
    flip = det < 0
    cells[flip, -2], cells[flip, -1] = cells[flip, -1], cells[flip, -2].copy()

    local_edges = LOCAL_EDGES[dim]
    pairs = cells[:, local_edges]  # (nc, nle, 2)
    sorted_pairs = np.sort(pairs, axis=2)
    edges, inv = np.unique(sorted_pairs.reshape(-1, 2), axis=0, return_inverse=True)
    cell_edges = inv.reshape(len(cells), len(local_edges))
    cell_edge_signs = np.where(pairs[:, :, 0] < pairs[:, :, 1], 1, -1)

    faces = cell_faces = cell_face_signs = boundary_faces = None
    if dim == 3:
        opposite = np.array([[j for j in range(4) if j != i] for i in range(4)])
        tri = np.sort(cells[:, opposite], axis=2)  # (nc, 4, 3)
        faces, finv = np.unique(tri.reshape(-1, 3), axis=0, return_inverse=True)
        cell_faces = finv.reshape(len(cells), 4)
        P = vertices[faces]
        normals = np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0])
        apex = vertices[cells]  # (nc, 4, 3)
        outward = np.einsum(
            "cfk,cfk->cf", normals[cell_faces], P[cell_faces][:, :, 0, :] - apex
        )
        cell_face_signs = np.where(outward > 0, 1, -1)
        counts = np.bincount(cell_faces.ravel(), minlength=len(faces))
        boundary_faces = counts == 1

    on_box = np.any((vertices == 0.0) | (vertices == 1.0), axis=1)
    if dim == 2:
        counts = np.bincount(cell_edges.ravel(), minlength=len(edges))
        boundary_edges = (counts == 1) & on_box[edges].all(axis=1)
    else:
        boundary_faces &= on_box[faces].all(axis=1)
        fe = np.array([[0, 1], [1, 2], [0, 2]])
        bf = faces[boundary_faces]
        b_pairs = bf[:, fe].reshape(-1, 2)
        lookup = {tuple(e): i for i, e in enumerate(map(tuple, edges))}
        boundary_edges = np.zeros(len(edges), dtype=bool)
        boundary_edges[[lookup[tuple(p)] for p in b_pairs]] = True

    return SimplicialMesh(
        dim=dim,
        n=n,
        vertices=vertices,
        cells=cells,
        edges=edges,
        faces=faces,
        cell_edges=cell_edges,
        cell_edge_signs=cell_edge_signs,
        cell_faces=cell_faces,
        cell_face_signs=cell_face_signs,
        boundary_vertices=on_box,
        boundary_edges=boundary_edges,
        boundary_faces=boundary_faces,
        _perm_lookup=perm_lookup,
    )


def classify_boundary(mesh: SimplicialMesh) -> dict[str, np.ndarray]:
    """Boolean boundary flags per entity type."""
    flags = {"vertices": mesh.boundary_vertices, "edges": mesh.boundary_edges}
    if mesh.dim == 3:
        flags["faces"] = mesh.boundary_faces
    flags["facets"] = mesh.boundary_facets
    return flags


def euler_characteristic(mesh: SimplicialMesh) -> int:
    chi = mesh.num_vertices - mesh.num_edges
    if mesh.dim == 2:
        return chi + mesh.num_cells
    return chi + mesh.num_faces - mesh.num_cells
