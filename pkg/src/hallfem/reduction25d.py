"""Planar operators and space wiring for the z-invariant (2.5D) system.

A z-invariant field ``v = (v~, v3)`` splits into an in-plane vector and an
out-of-plane scalar.  The 3D curl splits into the vector curl
``perp-grad(phi) = (d_y phi, -d_x phi)`` acting on scalars and the scalar
curl ``rot(v~) = d_x v2 - d_y v1`` acting on in-plane fields.  The discrete
unknowns live in

    u = (MINI_0, P1_0)   p in P1 / R   B = (RT_0, P1)   E, J = (NED_0, P1_0)

and are handled as three-component fields, so every coupling of the 3D
scheme (cross products, curl pairings) applies verbatim with ``d/dz = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import assembly
from .feec import FESpace, FieldSpace, SpaceKind, complex_operator


class DimensionError(ValueError):
    pass


def _require_2d(space):
    if space.mesh.dim != 2:
        raise DimensionError("planar operators are defined on 2D meshes only")


def planar_spaces(mesh) -> dict[str, FieldSpace | FESpace]:
    _require_2d(FESpace(mesh, SpaceKind.DG0))
    return dict(
        velocity=FieldSpace(
            [(FESpace(mesh, SpaceKind.MINI, "zero"), (0, 1)), (FESpace(mesh, SpaceKind.P1, "zero"), (2,))]
        ),
        pressure=FESpace(mesh, SpaceKind.P1, "mean"),
        magnetic=FieldSpace(
            [(FESpace(mesh, SpaceKind.RT, "zero"), (0, 1)), (FESpace(mesh, SpaceKind.P1, "free"), (2,))]
        ),
        edge=FieldSpace(
            [(FESpace(mesh, SpaceKind.NED, "zero"), (0, 1)), (FESpace(mesh, SpaceKind.P1, "zero"), (2,))]
        ),
    )


@dataclass
class PlanarFieldBundle:
    u_plane: np.ndarray
    u3: np.ndarray
    B_plane: np.ndarray
    B3: np.ndarray
    E_plane: np.ndarray
    E3: np.ndarray
    J_plane: np.ndarray
    J3: np.ndarray


def split_planar(state, spaces) -> PlanarFieldBundle:
    u_pl, u3 = spaces["velocity"].split(state.u)
    B_pl, B3 = spaces["magnetic"].split(state.B)
    E_pl, E3 = spaces["edge"].split(state.E)
    J_pl, J3 = spaces["edge"].split(state.J)
    return PlanarFieldBundle(u_pl, u3, B_pl, B3, E_pl, E3, J_pl, J3)


def perp_gradient_operator(scalar_space: FESpace, target: FESpace) -> sp.csr_matrix:
    """Incidence of perp-grad: P1 vertex values -> RT edge fluxes."""
    _require_2d(scalar_space)
    if scalar_space.kind is not SpaceKind.P1 or target.kind is not SpaceKind.RT:
        raise ValueError("perp-grad maps P1 into RT")
    return complex_operator(scalar_space, target)


def rot_operator(edge_space: FESpace, target: FESpace) -> sp.csr_matrix:
    """Scalar curl of edge fields.

    With a DG0 target this is the integer incidence (cell integrals of
    ``rot``).  With a P1 target it is the Galerkin pairing
    ``R[i, e] = int rot(w_e) phi_i``.
    """
    _require_2d(edge_space)
    if edge_space.kind is not SpaceKind.NED:
        raise ValueError("rot acts on the edge space")
    if target.kind is SpaceKind.DG0:
        return complex_operator(edge_space, target)
    if target.kind is SpaceKind.P1:
        Xfs = FieldSpace([(edge_space, (0, 1))])
        Bfs = FieldSpace([(target, (2,))])
        return assembly.curl_pairing(Xfs, Bfs)
    raise ValueError("rot maps into DG0 or pairs with P1")


def planar_cross_blocks(spaces, B_prev: np.ndarray) -> dict[tuple[str, str], sp.csr_matrix]:
    """Blocks of the frozen-field cross couplings between (u~, u3) and (J~, J3).

    Keys are ``(test, trial)`` with names ``u~``, ``u3``, ``J~``, ``J3``; the
    entry is ``int (psi_trial x B_prev) . phi_test`` with the planar product
    conventions ``v~ x phi = (v2 phi, -v1 phi)`` and ``v~ x w~ = v1 w2 - v2 w1``.
    """
    V = spaces["velocity"]
    X = spaces["edge"]
    Bfs = spaces["magnetic"]
    pieces = {
        "u~": FieldSpace([V.pieces[0]]),
        "u3": FieldSpace([V.pieces[1]]),
        "J~": FieldSpace([X.pieces[0]]),
        "J3": FieldSpace([X.pieces[1]]),
    }
    out = {}
    for test in pieces:
        for trial in pieces:
            out[(test, trial)] = assembly.cross_matrix(pieces[trial], pieces[test], Bfs, B_prev)
    return out


def aggregate_cross(blocks) -> sp.csr_matrix:
    names = ["u~", "u3", "J~", "J3"]
    return sp.bmat([[blocks[(r, c)] for c in names] for r in names], format="csr")
