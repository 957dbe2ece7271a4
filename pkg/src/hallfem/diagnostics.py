"""Energy, divergence and error functionals, plus CSV/VTK output."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .assembly import _chunks, physical_weights
from .feec import SpaceKind, as_field_space, cell_divergence, discrete_curl
from .quadrature import simplex_rule

CSV_COLUMNS = (
    "step",
    "time",
    "energy",
    "kinetic",
    "grad_kinetic",
    "magnetic",
    "current",
    "max_div_B",
    "solver_iters",
    "solver_residual",
)


class NonNestedMeshError(ValueError):
    pass


@dataclass
class DiagnosticsRow:
    step: int
    time: float
    energy: float
    kinetic: float
    grad_kinetic: float
    magnetic: float
    current: float
    max_div_B: float
    solver_iters: int = 0
    solver_residual: float = 0.0


def energy(disc, state, cfg) -> dict[str, float]:
    """Quadratic energy parts; in 2D every part includes the out-of-plane component."""
    kin = 0.5 * float(state.u @ (disc.M_V @ state.u))
    grad = 0.5 * cfg.alpha1 * float(state.u @ (disc.K_V @ state.u))
    mag = 0.5 * float(state.B @ (disc.M_B @ state.B))
    cur = 0.5 * cfg.alpha2 * float(state.J @ (disc.M_X @ state.J))
    return dict(kinetic=kin, grad_kinetic=grad, magnetic=mag, current=cur, energy=kin + grad + mag + cur)


def max_cell_div(B_space, B: np.ndarray) -> float:
    """max over cells of |div B| for the face-element pieces of ``B_space``."""
    fs = as_field_space(B_space)
    worst = 0.0
    for i, (s, _) in enumerate(fs.pieces):
        if s.kind is SpaceKind.RT:
            worst = max(worst, float(np.abs(cell_divergence(s, B[fs.piece_slice(i)])).max(initial=0.0)))
    return worst


def energy_row(disc, state, cfg, result=None) -> DiagnosticsRow:
    e = energy(disc, state, cfg)
    return DiagnosticsRow(
        state.step,
        state.time,
        e["energy"],
        e["kinetic"],
        e["grad_kinetic"],
        e["magnetic"],
        e["current"],
        max_cell_div(disc.Bs, state.B),
        0 if result is None else int(result.iterations),
        0.0 if result is None else float(result.residual),
    )


# ----------------------------------------------------------------- norms


def lp_norm(space, x: np.ndarray, p: float = 2.0, degree: int = 6) -> float:
    """(int |v|^p)^(1/p) by cell quadrature."""
    fs = as_field_space(space)
    mesh = fs.mesh
    rule = simplex_rule(mesh.dim, degree)
    total = 0.0
    for cells in _chunks(mesh, rule.num_points, 12):
        t = fs.tabulate(rule.points, cells)
        v = fs.evaluate(x, t)
        w = physical_weights(mesh, rule, cells)
        total += float(np.sum(w * np.linalg.norm(v, axis=-1) ** p))
    return total ** (1.0 / p)


def l3_norm(space, x: np.ndarray) -> float:
    return lp_norm(space, x, 3.0, degree=6)


def div_l2_norm(B_space, B: np.ndarray) -> float:
    fs = as_field_space(B_space)
    vol = fs.mesh.volumes()
    total = 0.0
    for i, (s, _) in enumerate(fs.pieces):
        if s.kind is SpaceKind.RT:
            d = cell_divergence(s, B[fs.piece_slice(i)])
            total += float(np.sum(d**2 * vol))
    return float(np.sqrt(total))


@dataclass
class GaffneyReport:
    l3: float
    curl_h: float
    div: float

    @property
    def holds(self) -> bool:
        return self.l3 <= self.curl_h + self.div + 1e-8


def gaffney_check(disc, B: np.ndarray) -> GaffneyReport:
    J = discrete_curl(disc.Bs, B, disc.X, pairing=disc.P, mass=disc.M_X)
    curl = float(np.sqrt(max(J @ (disc.M_X @ J), 0.0)))
    return GaffneyReport(l3_norm(disc.Bs, B), curl, div_l2_norm(disc.Bs, B))


def error_norm(coarse, reference, s: int = 0, degree: int | None = None) -> float:
    """H^s distance (s = 0 or 1) between a coarse field and a nested fine reference.

    ``coarse`` and ``reference`` are ``(space, dofs)`` pairs.  The integral is
    taken cell by cell on the fine mesh; every fine cell of a nested Kuhn
    refinement lies inside a single coarse cell, so both integrands are
    polynomial there and the quadrature is exact.  For s = 1 the full H^1 norm
    (value plus gradient) is returned.
    """
    if s not in (0, 1):
        raise ValueError("s must be 0 or 1")
    cfs, cx = as_field_space(coarse[0]), np.asarray(coarse[1], float)
    rfs, rx = as_field_space(reference[0]), np.asarray(reference[1], float)
    cm, fm = cfs.mesh, rfs.mesh
    if cm.dim != fm.dim or fm.n % cm.n:
        raise NonNestedMeshError(f"resolution {fm.n} is not a refinement of {cm.n}")
    if s == 1 and not (cfs.is_h1 and rfs.is_h1):
        raise ValueError("H1 error needs H1-conforming spaces")
    if cfs.ncomp_total != rfs.ncomp_total:
        raise ValueError("fields have different numbers of components")
    deg = 2 * max(cfs.degree, rfs.degree) if degree is None else degree
    rule = simplex_rule(fm.dim, deg)
    nq = rule.num_points
    grads = s == 1
    total = 0.0
    for cells in _chunks(fm, nq, 20):
        tf = rfs.tabulate(rule.points, cells, grads=grads)
        X = fm.vertices[fm.cells[cells]]
        pts = np.einsum("qi,cik->cqk", rule.points, X).reshape(-1, fm.dim)
        ccells = np.repeat(cm.locate(X.mean(axis=1)), nq)
        bary = cm.to_barycentric(ccells, pts)
        tc = cfs.tabulate(bary[:, None, :], ccells, grads=grads)
        w = physical_weights(fm, rule, cells)
        diff = cfs.evaluate(cx, tc).reshape(len(cells), nq, -1) - rfs.evaluate(rx, tf)
        total += float(np.sum(w * np.sum(diff**2, axis=-1)))
        if grads:
            gd = cfs.evaluate_grad(cx, tc).reshape(len(cells), nq, cfs.ncomp_total, -1)
            gd = gd - rfs.evaluate_grad(rx, tf)
            total += float(np.sum(w * np.sum(gd**2, axis=(-1, -2))))
    return float(np.sqrt(total))


# -------------------------------------------------------------------- I/O


def write_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in astuple(r)])
    return path


def read_csv(path) -> list[DiagnosticsRow]:
    types = [f.type for f in fields(DiagnosticsRow)]
    out = []
    with Path(path).open() as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError("unexpected CSV header")
        for rec in rd:
            vals = [int(v) if t in ("int", int) else float(v) for v, t in zip(rec, types)]
            out.append(DiagnosticsRow(*vals))
    return out


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _centroid_values(fs, x):
    d = fs.mesh.dim
    bary = np.full((1, d + 1), 1.0 / (d + 1))
    t = fs.tabulate(bary)
    return fs.evaluate(x, t)[:, 0, :]


def write_vtk(disc, state, path, title: str = "hallfem") -> Path:
    """Legacy ASCII unstructured grid with point data (u, p) and cell data (B, div B, J, E)."""
    mesh = disc.mesh
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nv, nc, d = mesh.num_vertices, mesh.num_cells, mesh.dim
    pts = np.zeros((nv, 3))
    pts[:, :d] = mesh.vertices
    # bubbles vanish at vertices, so vertex dofs are the nodal velocity
    bary_v = np.eye(d + 1)
    tv = disc.V.tabulate(bary_v)
    uc = disc.V.evaluate(state.u, tv)
    u_nodal = np.zeros((nv, 3))
    u_nodal[mesh.cells.ravel()] = uc.reshape(-1, 3)
    p_nodal = state.p[:nv]
    Bc = _centroid_values(disc.Bs, state.B)
    Jc = _centroid_values(disc.X, state.J)
    Ec = _centroid_values(disc.X, state.E)
    divB = np.zeros(nc)
    for i, (s, _) in enumerate(disc.Bs.pieces):
        if s.kind is SpaceKind.RT:
            divB = cell_divergence(s, state.B[disc.Bs.piece_slice(i)])
    ctype = 5 if d == 2 else 10
    lines = [
        "# vtk DataFile Version 3.0",
        f"{title} step {state.step} t={state.time:.9g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [" ".join(repr(float(c)) for c in row) for row in pts]
    lines.append(f"CELLS {nc} {nc * (d + 2)}")
    lines += [" ".join(map(str, [d + 1, *row])) for row in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(ctype)] * nc
    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS u double")
    lines += [" ".join(repr(float(c)) for c in row) for row in u_nodal]
    lines += ["SCALARS p double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(v)) for v in p_nodal]
    lines.append(f"CELL_DATA {nc}")
    for name, arr in (("B", Bc), ("J", Jc), ("E", Ec)):
        lines.append(f"VECTORS {name} double")
        lines += [" ".join(repr(float(c)) for c in row) for row in arr]
    lines += ["SCALARS divB double 1", "LOOKUP_TABLE default"]
    lines += [repr(float(v)) for v in divB]
    path.write_text("\n".join(lines) + "\n")
    return path


def validate_vtk(path) -> dict:
    """Parse the structure of a legacy VTK file written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version"):
        raise ValueError("missing VTK header")
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("unsupported VTK dataset")
    info = {}
    i = 4
    while i < len(tokens):
        parts = tokens[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0]
        if key == "POINTS":
            info["points"] = int(parts[1])
            i += info["points"] + 1
        elif key == "CELLS":
            info["cells"] = int(parts[1])
            body = tokens[i + 1:i + 1 + info["cells"]]
            if sum(len(b.split()) for b in body) != int(parts[2]):
                raise ValueError("CELLS size mismatch")
            i += info["cells"] + 1
        elif key == "CELL_TYPES":
            i += int(parts[1]) + 1
        elif key in ("POINT_DATA", "CELL_DATA"):
            info[key.lower()] = int(parts[1])
            i += 1
        elif key == "VECTORS":
            owner = "cell_data" if "cell_data" in info else "point_data"
            count = info[owner]
            body = tokens[i + 1:i + 1 + count]
            if any(len(b.split()) != 3 for b in body):
                raise ValueError(f"vector field {parts[1]} malformed")
            info.setdefault("fields", []).append(parts[1])
            i += count + 1
        elif key == "SCALARS":
            owner = "cell_data" if "cell_data" in info else "point_data"
            info.setdefault("fields", []).append(parts[1])
            i += info[owner] + 2
        else:
            raise ValueError(f"unexpected VTK token {key!r}")
    return info


def run_file_names(run_name: str, step: int | None = None) -> str:
    return f"{run_name}_diag.csv" if step is None else f"{run_name}_step{step}.vtk"
