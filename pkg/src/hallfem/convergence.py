"""Spatial and temporal convergence studies against nested reference runs."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import error_norm
from .scheme import Discretization, SchemeConfig, State, run

FIELDS = ("E0u", "E1u", "E0B", "E0J")


@dataclass
class ConvergenceResult:
    axis: str  # "space" or "time"
    sizes: list[float]  # h or tau per coarse run
    errors: dict[str, list[float]]
    reference: dict = field(default_factory=dict)

    def rates(self, name: str) -> list[float]:
        return observed_rates(self.sizes, self.errors[name])

    def fitted_rate(self, name: str) -> float:
        return fitted_rate(self.sizes, self.errors[name])


def observed_rates(sizes, errors) -> list[float]:
    """Pairwise log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    out = []
    for (h0, e0), (h1, e1) in zip(zip(sizes, errors), zip(sizes[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            out.append(float("nan"))
    return out


def fitted_rate(sizes, errors) -> float:
    """Least-squares slope of log(error) against log(size) over the whole study."""
    if len(sizes) < 2:
        raise ValueError("a rate needs at least two sizes")
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])


def _final_state(cfg: SchemeConfig) -> State:
    return run(cfg, keep_states=False).final


def _final_states(cfgs, jobs: int) -> list[State]:
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_final_state, cfgs))
    return [_final_state(c) for c in cfgs]


def field_errors(disc: Discretization, state: State, ref_disc: Discretization, ref: State) -> dict[str, float]:
    return dict(
        E0u=error_norm((disc.V, state.u), (ref_disc.V, ref.u), 0),
        E1u=error_norm((disc.V, state.u), (ref_disc.V, ref.u), 1),
        E0B=error_norm((disc.Bs, state.B), (ref_disc.Bs, ref.B), 0),
        E0J=error_norm((disc.X, state.J), (ref_disc.X, ref.J), 0),
    )


def spatial_study(cfg: SchemeConfig, meshes, ref_n: int, *, jobs: int = 1) -> ConvergenceResult:
    """Errors at time T of runs on ``meshes`` against a run at ``ref_n`` (same tau)."""
    meshes = [int(m) for m in meshes]
    if any(b <= a for a, b in zip(meshes, meshes[1:])):
        raise ValueError("mesh list must be strictly increasing")
    if any(ref_n % m for m in meshes):
        raise ValueError(f"reference resolution {ref_n} must be a multiple of every mesh resolution")
    cfgs = [cfg.with_(n=m) for m in meshes] + [cfg.with_(n=ref_n)]
    finals = _final_states(cfgs, jobs)
    ref_disc = Discretization.build(ref_n, cfg.dim)
    errs = {k: [] for k in FIELDS}
    for m, st in zip(meshes, finals[:-1]):
        e = field_errors(Discretization.build(m, cfg.dim), st, ref_disc, finals[-1])
        for k in FIELDS:
            errs[k].append(e[k])
    return ConvergenceResult(
        "space", [1.0 / m for m in meshes], errs, dict(ref_n=ref_n, tau=cfg.tau, T=cfg.T)
    )


def temporal_study(cfg: SchemeConfig, taus, ref_tau: float | None = None, *, jobs: int = 1) -> ConvergenceResult:
    """Errors at time T of runs with step sizes ``taus`` against ``ref_tau`` on one mesh."""
    taus = [float(t) for t in taus]
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("time steps must be strictly decreasing")
    ref_tau = min(taus) / 5 if ref_tau is None else float(ref_tau)
    for t in taus + [ref_tau]:
        steps = cfg.T / t
        if abs(steps - round(steps)) > 1e-8:
            raise ValueError(f"T={cfg.T} is not a multiple of tau={t}")
    cfgs = [cfg.with_(tau=t) for t in taus] + [cfg.with_(tau=ref_tau)]
    finals = _final_states(cfgs, jobs)
    disc = Discretization.build(cfg.n, cfg.dim)
    errs = {k: [] for k in FIELDS}
    for st in finals[:-1]:
        e = field_errors(disc, st, disc, finals[-1])
        for k in FIELDS:
            errs[k].append(e[k])
    return ConvergenceResult("time", taus, errs, dict(n=cfg.n, ref_tau=ref_tau, T=cfg.T))


def write_rate_table(result: ConvergenceResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    label = "h" if result.axis == "space" else "tau"
    with path.open("w", newline="") as fh:
        fh.write(f"# reference: {', '.join(f'{k}={v}' for k, v in result.reference.items())}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([label, *FIELDS, *(f"rate_{k}" for k in FIELDS)])
        rates = {k: [float("nan")] + result.rates(k) for k in FIELDS}
        for i, s in enumerate(result.sizes):
            w.writerow(
                [repr(s)]
                + [repr(result.errors[k][i]) for k in FIELDS]
                + ["" if np.isnan(rates[k][i]) else f"{rates[k][i]:.4f}" for k in FIELDS]
            )
    return path
