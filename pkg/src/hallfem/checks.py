"""Battery of structural self-checks run by ``hallfem check``.

Each check returns a :class:`CheckResult`.  The incidence-operator factory
is injectable so that a test harness can corrupt it and confirm that the
battery notices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import assembly
from .feec import (
    FESpace,
    SpaceKind,
    TraceViolationWarning,
    analytic_curl,
    analytic_divergence,
    canonical_interpolate,
    complex_operator,
)
from .mesh import build_unit_box_mesh
from .reduction25d import aggregate_cross, planar_cross_blocks
from .scheme import Discretization, SchemeConfig, run


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def _sequence(mesh):
    P1, NED, RT, DG = (FESpace(mesh, k) for k in (SpaceKind.P1, SpaceKind.NED, SpaceKind.RT, SpaceKind.DG0))
    if mesh.dim == 3:
        return [("curl.grad", P1, NED, RT), ("div.curl", NED, RT, DG)]
    return [("rot.grad", P1, NED, DG), ("div.perpgrad", P1, RT, DG)]


def check_exactness(ns=(1, 2), dims=(2, 3), operator=complex_operator) -> CheckResult:
    worst = 0
    for dim in dims:
        for n in ns:
            mesh = build_unit_box_mesh(n, dim)
            for _, a, b, c in _sequence(mesh):
                prod = operator(b, c) @ operator(a, b)
                worst = max(worst, int(abs(prod).max()) if prod.nnz else 0)
    return CheckResult("exact sequence", worst == 0, f"max |entry| = {worst}")


def _poly(x):
    if x.shape[1] == 3:
        return np.stack([x[:, 0] ** 2, x[:, 0] * x[:, 1], x[:, 2]], axis=1)
    return np.stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]], axis=1)


def check_commuting(ns=(1, 2), dims=(2, 3), operator=complex_operator, tol=1e-10) -> CheckResult:
    worst = 0.0
    for dim in dims:
        for n in ns:
            mesh = build_unit_box_mesh(n, dim)
            NED, RT, DG = (FESpace(mesh, k) for k in (SpaceKind.NED, SpaceKind.RT, SpaceKind.DG0))
            vol = mesh.volumes()
            div = analytic_divergence(_poly, dim)
            lhs = operator(RT, DG) @ canonical_interpolate(RT, _poly) / vol
            worst = max(worst, np.abs(lhs - canonical_interpolate(DG, div)).max())
            if dim == 3:
                lhs = operator(NED, RT) @ canonical_interpolate(NED, _poly)
                rhs = canonical_interpolate(RT, analytic_curl(_poly, 3))
            else:
                lhs = operator(NED, DG) @ canonical_interpolate(NED, _poly) / vol
                rhs = canonical_interpolate(DG, lambda x: analytic_curl(_poly, 2)(x)[:, 2])
            worst = max(worst, np.abs(lhs - rhs).max())
    return CheckResult("commuting diagram", worst <= tol, f"max defect = {worst:.2e}")


def check_skewness(ns=(1, 2), dims=(2, 3), seed=0, tol=1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim in dims:
        for n in ns:
            d = Discretization.build(n, dim)
            w = rng.standard_normal(d.V.ndofs)
            B = rng.standard_normal(d.Bs.ndofs)
            N = assembly.convection_matrix(d.V, w)
            worst = max(worst, abs(N + N.T).max())
            K = assembly.cross_matrix(d.X, d.X, d.Bs, B)
            worst = max(worst, abs(K + K.T).max())
            if dim == 2:
                agg = aggregate_cross(planar_cross_blocks(d.spaces, B))
                worst = max(worst, abs(agg + agg.T).max())
    return CheckResult("skew couplings", worst <= tol, f"max |A + A^T| = {worst:.2e}")


def _short_runs(tau):
    out = []
    for name, n in (("abc3d", 1), ("abc3d", 2), ("orszag-tang", 1), ("orszag-tang", 2)):
        cfg = SchemeConfig.from_preset(name, n=n, tau=tau, T=3 * tau)
        with warnings.catch_warnings():
            # the ABC datum has a nonzero boundary trace by construction
            warnings.simplefilter("ignore", TraceViolationWarning)
            out.append((name, n, run(cfg, keep_states=False)))
    return out


def check_energy_and_divergence(taus=(0.01, 10.0)) -> list[CheckResult]:
    worst_e = 0.0
    worst_d = 0.0
    for tau in taus:
        for _, _, r in _short_runs(tau):
            e = np.array([row.energy for row in r.rows])
            worst_e = max(worst_e, float(np.max(np.diff(e) / e[:-1], initial=0.0)))
            dv = np.array([row.max_div_B for row in r.rows])
            worst_d = max(worst_d, float(dv.max()))
    taus_s = ",".join(f"{t:g}" for t in taus)
    return [
        CheckResult(f"energy monotone (tau in {{{taus_s}}})", worst_e <= 1e-9, f"max relative increase = {worst_e:.2e}"),
        CheckResult("divergence preserved", worst_d <= 1e-10, f"max cell |div B| = {worst_d:.2e}"),
    ]


def run_checks(operator=complex_operator) -> list[CheckResult]:
    results = [check_exactness(operator=operator), check_commuting(operator=operator), check_skewness()]
    results += check_energy_and_divergence()
    return results
