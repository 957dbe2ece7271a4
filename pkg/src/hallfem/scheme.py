"""Linearly implicit time integrator for the Voigt-regularised Hall-MHD system.

Each step freezes the convecting velocity and the magnetic field at the
previous level and solves one linear system for all five fields.  Unknown
blocks are ordered ``[u | p, lambda | B | E | J]`` where ``lambda`` is the
multiplier enforcing a zero-mean pressure.  Rows (all scaled by the step):

    momentum     (M_V + a1 K_V + tau nu K_V + tau N) u - tau D^T p - tau K_uJ J = (M_V + a1 K_V) u_prev
    continuity   -tau D u - tau m lambda = 0,   -tau m^T p = 0
    induction    M_B B + tau P E = M_B B_prev
    Ohm          tau K_uJ^T u - tau M_X E + ((a2 + tau sigma) M_X + tau eta K_JJ) J = a2 M_X J_prev
    Ampere       -P^T B + M_X J = 0

with ``P[i, j] = <psi_i, curl w_j>`` and ``K_ab[i, j] = <(b_j x B_prev), a_i>``.
The Ohm row sits in the E slot and the Ampere row in the J slot, so only the
pressure block has a zero diagonal.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import assembly
from .experiments import InitialData, get_preset
from .feec import (
    FESpace,
    FieldSpace,
    SpaceKind,
    analytic_divergence,
    cell_divergence,
    discrete_curl,
    interpolate_curl,
    canonical_interpolate,
)
from .mesh import build_unit_box_mesh
from .reduction25d import planar_spaces
from .sparse_la import SolveResult, SolverConfig, SolverError, solve

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class StepFailure(SolverError):
    def __init__(self, message, step, residual=float("nan")):
        super().__init__(message)
        self.step = step
        self.residual = residual


@dataclass(frozen=True)
class SchemeConfig:
    nu: float
    sigma: float
    eta: float
    alpha1: float
    alpha2: float
    tau: float
    T: float
    dim: int
    n: int
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: str = "custom"
    forcing: Callable | None = None  # f(x, t) -> (N, 3)

    def __post_init__(self):
        for name in ("nu", "sigma", "eta", "alpha1", "alpha2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be a nonnegative real, got {v}")
        if self.nu <= 0:
            raise ConfigError("viscosity must be positive")
        if self.sigma == 0 and self.alpha2 <= 0:
            raise ConfigError("without resistivity the electron-inertia coefficient must be positive")
        if not self.tau > 0:
            raise ConfigError("time step must be positive")
        if not self.T >= 0:
            raise ConfigError("final time must be nonnegative")
        if self.dim not in (2, 3):
            raise ConfigError("dimension must be 2 or 3")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("mesh resolution must be a positive integer")

    @property
    def num_steps(self) -> int:
        # guard against T/tau landing just below an integer
        return int(math.floor(self.T / self.tau + 1e-9))

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "SchemeConfig":
        preset = get_preset(name)
        kw = dict(preset.params, dim=preset.dim, experiment=name)
        kw.update(preset.defaults)
        kw.update(overrides)
        return cls(**kw)

    def with_(self, **kw) -> "SchemeConfig":
        return replace(self, **kw)


@dataclass
class State:
    step: int
    time: float
    u: np.ndarray
    p: np.ndarray
    B: np.ndarray
    E: np.ndarray
    J: np.ndarray
    lam: float = 0.0

    def copy(self) -> "State":
        return State(
            self.step, self.time, self.u.copy(), self.p.copy(), self.B.copy(), self.E.copy(), self.J.copy(), self.lam
        )


def spatial_spaces(mesh) -> dict:
    if mesh.dim == 2:
        return planar_spaces(mesh)
    return dict(
        velocity=FieldSpace([(FESpace(mesh, SpaceKind.MINI, "zero"), (0, 1, 2))]),
        pressure=FESpace(mesh, SpaceKind.P1, "mean"),
        magnetic=FieldSpace([(FESpace(mesh, SpaceKind.RT, "zero"), (0, 1, 2))]),
        edge=FieldSpace([(FESpace(mesh, SpaceKind.NED, "zero"), (0, 1, 2))]),
    )


class Discretization:
    """Spaces and time-independent matrices on one mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        sp_ = spatial_spaces(mesh)
        self.V: FieldSpace = sp_["velocity"]
        self.Q: FESpace = sp_["pressure"]
        self.Bs: FieldSpace = sp_["magnetic"]
        self.X: FieldSpace = sp_["edge"]
        self.spaces = sp_
        self.M_V = assembly.mass_matrix(self.V)
        self.K_V = assembly.stiffness_matrix(self.V)
        self.D = assembly.div_pressure_matrix(self.V, self.Q)
        self.m = assembly.load_vector(self.Q, lambda x: np.ones(len(x)), degree=1)
        self.M_B = assembly.mass_matrix(self.Bs)
        self.M_X = assembly.mass_matrix(self.X)
        self.P = assembly.curl_pairing(self.X, self.Bs)
        nv, nq, nb, nx = self.V.ndofs, self.Q.ndofs, self.Bs.ndofs, self.X.ndofs
        self.sizes = dict(u=nv, p=nq, lam=1, B=nb, E=nx, J=nx)
        off = np.cumsum([0, nv, nq, 1, nb, nx, nx])
        self.offsets = dict(zip(["u", "p", "lam", "B", "E", "J", "end"], off))
        self.ndofs = int(off[-1])
        self.free = np.concatenate(
            [
                self.V.free + off[0],
                np.arange(nq) + off[1],
                [off[2]],
                self.Bs.free + off[3],
                self.X.free + off[4],
                self.X.free + off[5],
            ]
        ).astype(np.int64)

    @classmethod
    def build(cls, n: int, dim: int) -> "Discretization":
        return cls(build_unit_box_mesh(n, dim))

    def pack(self, s: State) -> np.ndarray:
        return np.concatenate([s.u, s.p, [s.lam], s.B, s.E, s.J])

    def unpack(self, x: np.ndarray, step: int, time: float) -> State:
        o = self.offsets
        return State(
            step,
            time,
            x[o["u"]:o["p"]].copy(),
            x[o["p"]:o["lam"]].copy(),
            x[o["B"]:o["E"]].copy(),
            x[o["E"]:o["J"]].copy(),
            x[o["J"]:o["end"]].copy(),
            float(x[o["lam"]]),
        )

    def zero_state(self) -> State:
        return self.unpack(np.zeros(self.ndofs), 0, 0.0)


# ------------------------------------------------------------ initial data


def stokes_project(
    disc: Discretization,
    u0=None,
    nu: float = 1.0,
    solver: SolverConfig | None = None,
    *,
    source: np.ndarray | None = None,
):
    """Discrete Stokes projection of ``u0`` onto the zero-trace MINI space.

    Solves nu <grad(Su - u0), grad phi> - <p, div phi> = 0 and
    <div Su, q> = <div u0, q> for all P1 q, with a zero-mean pressure.
    The mean multiplier absorbs the compatibility defect when u0 has a
    nonzero boundary flux.  Pass ``source`` (velocity dofs) instead of an
    analytic ``u0`` to project a discrete field.  Returns (u, p, lambda).
    """
    V, Q = disc.V, disc.Q
    nv, nq = V.ndofs, Q.ndofs
    A = sp.bmat(
        [
            [nu * disc.K_V, -disc.D.T, None],
            [-disc.D, None, -sp.csr_matrix(disc.m[:, None])],
            [None, -sp.csr_matrix(disc.m[None, :]), None],
        ],
        format="csr",
    )
    if source is not None:
        b_u, b_p = nu * (disc.K_V @ source), -(disc.D @ source)
    else:
        b_u = nu * assembly.gradient_load_vector(V, u0)
        b_p = -assembly.load_vector(Q, analytic_divergence(u0, disc.mesh.dim))
    rhs = np.concatenate([b_u, b_p, [0.0]])
    free = np.concatenate([V.free, nv + np.arange(nq), [nv + nq]])
    x = np.zeros(nv + nq + 1)
    res = solve(A[free][:, free], rhs[free], solver or SolverConfig(method="auto"))
    x[free] = res.x
    return x[:nv], x[nv:nv + nq], float(x[-1])


def interpolate_magnetic(disc: Discretization, data: InitialData) -> np.ndarray:
    if data.A0 is not None:
        return interpolate_curl(disc.Bs, data.A0)
    return canonical_interpolate(disc.Bs, data.B0)


def max_cell_div(disc_or_space, B: np.ndarray) -> float:
    Bfs = disc_or_space.Bs if isinstance(disc_or_space, Discretization) else disc_or_space
    worst = 0.0
    for i, (s, _) in enumerate(Bfs.pieces):
        if s.kind is SpaceKind.RT:
            d = cell_divergence(s, B[Bfs.piece_slice(i)])
            worst = max(worst, float(np.abs(d).max(initial=0.0)))
    return worst


def initialize_state(cfg: SchemeConfig, data: InitialData, disc: Discretization | None = None) -> State:
    disc = disc or Discretization.build(cfg.n, cfg.dim)
    u, p, lam = stokes_project(disc, data.u0, cfg.nu, cfg.solver)
    B = interpolate_magnetic(disc, data)
    div = max_cell_div(disc, B)
    if div > 1e-8:
        warnings.warn(f"initial magnetic field is not solenoidal (max cell div {div:.3e})", stacklevel=2)
    J = discrete_curl(disc.Bs, B, disc.X, pairing=disc.P, mass=disc.M_X)
    return State(0, 0.0, u, p, B, np.zeros(disc.X.ndofs), J, lam)


# ------------------------------------------------------------------ step


def frozen_operators(disc: Discretization, prev: State) -> dict:
    """Coefficient-dependent matrices frozen at the previous level."""
    N = assembly.convection_matrix(disc.V, prev.u)
    K_uJ = assembly.cross_matrix(disc.X, disc.V, disc.Bs, prev.B)
    K_JJ = assembly.cross_matrix(disc.X, disc.X, disc.Bs, prev.B)
    return dict(N=N, K_uJ=K_uJ, K_JJ=K_JJ)


def assemble_step(disc: Discretization, prev: State, cfg: SchemeConfig, frozen: dict | None = None):
    """Full block matrix and right-hand side (constrained dofs not yet removed)."""
    fr = frozen or frozen_operators(disc, prev)
    tau, nu, sig, eta, a1, a2 = cfg.tau, cfg.nu, cfg.sigma, cfg.eta, cfg.alpha1, cfg.alpha2
    H_V = disc.M_V + a1 * disc.K_V
    m = sp.csr_matrix(disc.m[:, None])
    A = sp.bmat(
        [
            [H_V + tau * nu * disc.K_V + tau * fr["N"], -tau * disc.D.T, None, None, None, -tau * fr["K_uJ"]],
            [-tau * disc.D, None, -tau * m, None, None, None],
            [None, -tau * m.T, None, None, None, None],
            [None, None, None, disc.M_B, tau * disc.P, None],
            [tau * fr["K_uJ"].T, None, None, None, -tau * disc.M_X, (a2 + tau * sig) * disc.M_X + tau * eta * fr["K_JJ"]],
            [None, None, None, -disc.P.T, None, disc.M_X],
        ],
        format="csr",
    )
    b_u = H_V @ prev.u
    if cfg.forcing is not None:
        t_new = prev.time + tau
        b_u = b_u + tau * assembly.load_vector(disc.V, lambda x: cfg.forcing(x, t_new))
    rhs = np.concatenate(
        [
            b_u,
            np.zeros(disc.Q.ndofs + 1),
            disc.M_B @ prev.B,
            a2 * (disc.M_X @ prev.J),
            np.zeros(disc.X.ndofs),
        ]
    )
    return A, rhs


def step(disc: Discretization, prev: State, cfg: SchemeConfig) -> tuple[State, SolveResult]:
    A, rhs = assemble_step(disc, prev, cfg)
    free = disc.free
    try:
        res = solve(A[free][:, free], rhs[free], cfg.solver)
    except SolverError as exc:
        raise StepFailure(
            f"step {prev.step + 1} failed: {exc}", prev.step + 1, getattr(exc, "residual", float("nan"))
        ) from exc
    x = np.zeros(disc.ndofs)
    x[free] = res.x
    return disc.unpack(x, prev.step + 1, prev.time + cfg.tau), res


# ------------------------------------------------------------------- run


@dataclass
class RunResult:
    states: list[State]
    rows: list  # DiagnosticsRow
    final: State
    disc: Discretization
    div_preserved: bool
    energy_monotone: bool
    dissipation: list[float]  # cumulative tau*nu*sum|grad u|^2 + tau*sigma*sum|J|^2


def run(
    cfg: SchemeConfig,
    data: InitialData | None = None,
    *,
    disc: Discretization | None = None,
    keep_states: bool | int = True,
    callback: Callable[[State, "object"], None] | None = None,
) -> RunResult:
    """Advance ``floor(T / tau)`` steps from the projected initial data.

    ``keep_states`` may be True (all), False (initial and final only) or an
    integer stride.
    """
    from .diagnostics import energy_row

    if data is None:
        data = get_preset(cfg.experiment).data
    disc = disc or Discretization.build(cfg.n, cfg.dim)
    state = initialize_state(cfg, data, disc)
    row = energy_row(disc, state, cfg)
    rows = [row]
    states = [state]
    dissip = [0.0]
    div0 = cell_divergence_vector(disc, state.B)
    scale = max(1.0, float(np.abs(div0).max(initial=0.0)))
    div_ok = True
    mono = True
    if callback:
        callback(state, row)
    stride = 1 if keep_states is True else (int(keep_states) if keep_states else 0)
    for k in range(1, cfg.num_steps + 1):
        new, res = step(disc, state, cfg)
        row = energy_row(disc, new, cfg, res)
        gu = float(new.u @ (disc.K_V @ new.u))
        jj = float(new.J @ (disc.M_X @ new.J))
        dissip.append(dissip[-1] + cfg.tau * (cfg.nu * gu + cfg.sigma * jj))
        if rows[-1].energy > 0 and row.energy > rows[-1].energy * (1 + 1e-9) + 1e-300:
            mono = False
        if np.abs(cell_divergence_vector(disc, new.B) - div0).max(initial=0.0) > 1e-10 * scale:
            div_ok = False
        rows.append(row)
        if stride and k % stride == 0:
            states.append(new)
        if callback:
            callback(new, row)
        log.debug("step %d t=%.4g E=%.6e", k, new.time, row.energy)
        state = new
    if states[-1] is not state:
        states.append(state)
    return RunResult(states, rows, state, disc, div_ok, mono, dissip)


def cell_divergence_vector(disc: Discretization, B: np.ndarray) -> np.ndarray:
    parts = [
        cell_divergence(s, B[disc.Bs.piece_slice(i)])
        for i, (s, _) in enumerate(disc.Bs.pieces)
        if s.kind is SpaceKind.RT
    ]
    return np.concatenate(parts)
