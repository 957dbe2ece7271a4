"""Command-line interface: ``hallfem {run,converge-space,converge-time,check}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .experiments import PRESETS, InitialData, Preset
from .feec import TraceViolationWarning
from .scheme import ConfigError, SchemeConfig
from .sparse_la import SolverConfig, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("hallfem")

_FLOAT_KEYS = ("tau", "T", "nu", "sigma", "eta", "alpha1", "alpha2", "tol", "ref_tau")
_INT_KEYS = ("n", "dim", "ref_n", "jobs", "vtk_every")
_STR_KEYS = ("experiment", "out", "solver", "name")
_LIST_KEYS = ("meshes", "taus")
_EXPR_KEYS = tuple(f"{f}_{c}" for f in ("u0", "A0") for c in "xyz")


@dataclass
class RunManifest:
    experiment: str
    cfg: SchemeConfig
    out: Path
    name: str
    meshes: list[int] = field(default_factory=list)
    taus: list[float] = field(default_factory=list)
    ref_n: int | None = None
    ref_tau: float | None = None
    jobs: int = 1
    vtk_every: int = 0
    data: InitialData | None = None


def _number(text: str) -> float:
    # accepts 0.0025 as well as 1/40
    return float(Fraction(text.strip())) if "/" in text else float(text)


def parse_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _FLOAT_KEYS:
            return _number(value) if isinstance(value, str) else float(value)
        if key in _INT_KEYS:
            return int(value)
        if key in _LIST_KEYS:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            conv = int if key == "meshes" else _number
            return [conv(v) if isinstance(v, str) else v for v in value]
        if key in _STR_KEYS or key in _EXPR_KEYS:
            return str(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    raise ConfigError(f"unknown configuration key {key!r}")


_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "pi")
}


def _expression_field(exprs: list[str], dim: int):
    codes = [compile(e, "<config>", "eval") for e in exprs]

    def f(x):
        ns = dict(_EXPR_NAMESPACE, x=x[:, 0], y=x[:, 1], z=x[:, 2] if dim == 3 else 0.0 * x[:, 0])
        zero = np.zeros(x.shape[0], dtype=x.dtype)
        return np.stack([zero + eval(c, {"__builtins__": {}}, ns) for c in codes], axis=1)

    return f


def _custom_data(values: dict, dim: int) -> InitialData:
    u = [values.get(f"u0_{c}", "0") for c in "xyz"]
    A = [values.get(f"A0_{c}", "0") for c in "xyz"]
    try:
        return InitialData(_expression_field(u, dim), _expression_field(A, dim))
    except SyntaxError as exc:
        raise ConfigError(f"bad initial-data expression: {exc}") from exc


def build_manifest(args: argparse.Namespace) -> RunManifest:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(parse_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for key in (*_FLOAT_KEYS, *_INT_KEYS, *_STR_KEYS, *_LIST_KEYS):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values = {k: _coerce(k, v) for k, v in values.items()}
    experiment = values.get("experiment", "orszag-tang")
    if experiment == "custom":
        if "dim" not in values:
            raise ConfigError("custom experiments need 'dim'")
        preset = Preset("custom", values["dim"], {}, _custom_data(values, values["dim"]))
    elif experiment in PRESETS:
        preset = PRESETS[experiment]
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    params = dict(preset.defaults)
    params.update(preset.params)
    for key in ("nu", "sigma", "eta", "alpha1", "alpha2", "tau", "T", "n"):
        if key in values:
            params[key] = values[key]
    missing = [k for k in ("nu", "sigma", "eta", "alpha1", "alpha2", "tau", "T", "n") if k not in params]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)}")
    try:
        solver = SolverConfig(method=values.get("solver", "auto"), tol=values.get("tol", 1e-10))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = SchemeConfig(dim=preset.dim, solver=solver, experiment=experiment, **params)
    meshes = values.get("meshes", [])
    ref_n = values.get("ref_n")
    if meshes:
        if any(b <= a for a, b in zip(meshes, meshes[1:])):
            raise ConfigError("mesh list must be strictly increasing")
        if ref_n is not None and any(ref_n % m for m in meshes):
            raise ConfigError("reference resolution must be a multiple of every mesh resolution")
    return RunManifest(
        experiment=experiment,
        cfg=cfg,
        out=Path(values.get("out", "out")),
        name=values.get("name", experiment),
        meshes=meshes,
        taus=values.get("taus", []),
        ref_n=ref_n,
        ref_tau=values.get("ref_tau"),
        jobs=values.get("jobs", 1),
        vtk_every=values.get("vtk_every", 0),
        data=preset.data,
    )


# ------------------------------------------------------------- commands


def cmd_run(m: RunManifest) -> int:
    from .diagnostics import run_file_names, write_csv, write_vtk
    from .scheme import run

    m.out.mkdir(parents=True, exist_ok=True)

    def dump(state, row):
        if m.vtk_every and state.step % m.vtk_every == 0:
            write_vtk(result_disc[0], state, m.out / run_file_names(m.name, state.step), title=m.name)

    from .scheme import Discretization

    result_disc = [Discretization.build(m.cfg.n, m.cfg.dim)]
    res = run(m.cfg, m.data, disc=result_disc[0], keep_states=False, callback=dump)
    write_csv(res.rows, m.out / run_file_names(m.name))
    write_vtk(res.disc, res.final, m.out / run_file_names(m.name, res.final.step), title=m.name)
    meta = dict(
        experiment=m.experiment,
        config={k: v for k, v in asdict(m.cfg).items() if k not in ("forcing",)},
        steps=res.final.step,
        div_preserved=res.div_preserved,
        energy_monotone=res.energy_monotone,
    )
    (m.out / f"{m.name}_meta.json").write_text(json.dumps(meta, indent=2, default=str) + "\n")
    last = res.rows[-1]
    print(
        f"{m.name}: {res.final.step} steps, E={last.energy:.6e}, max div B={last.max_div_B:.2e}, "
        f"energy monotone={res.energy_monotone}, div preserved={res.div_preserved}"
    )
    return EXIT_OK


def _print_study(result):
    from .convergence import FIELDS

    label = "h" if result.axis == "space" else "tau"
    print(f"{label:>10} " + " ".join(f"{k:>12}" for k in FIELDS))
    for i, s in enumerate(result.sizes):
        print(f"{s:10.5g} " + " ".join(f"{result.errors[k][i]:12.4e}" for k in FIELDS))
    for k in FIELDS:
        print(f"rate {k}: " + ", ".join(f"{r:.3f}" for r in result.rates(k)))


def cmd_converge(m: RunManifest, axis: str) -> int:
    from .convergence import spatial_study, temporal_study, write_rate_table

    if axis == "space":
        if not m.meshes:
            raise ConfigError("converge-space needs --meshes")
        ref_n = m.ref_n or 2 * m.meshes[-1]
        if any(ref_n % k for k in m.meshes):
            raise ConfigError("reference resolution must be a multiple of every mesh resolution")
        result = spatial_study(m.cfg, m.meshes, ref_n, jobs=m.jobs)
    else:
        if not m.taus:
            raise ConfigError("converge-time needs --taus")
        try:
            result = temporal_study(m.cfg, m.taus, m.ref_tau, jobs=m.jobs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    path = write_rate_table(result, m.out / f"{m.name}_rates_{axis}.csv")
    _print_study(result)
    print(f"rate table written to {path}")
    return EXIT_OK


def cmd_check(operator=None) -> int:
    from .checks import run_checks

    kw = {} if operator is None else dict(operator=operator)
    results = run_checks(**kw)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# --------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--experiment", choices=[*PRESETS, "custom"])
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--tau", type=str)
    p.add_argument("--T", type=str)
    for name in ("nu", "sigma", "eta", "alpha1", "alpha2"):
        p.add_argument(f"--{name}", type=str)
    p.add_argument("--out")
    p.add_argument("--name")
    p.add_argument("--solver", choices=["auto", "dense", "direct", "gmres"])
    p.add_argument("--tol", type=str)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hallfem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="advance one experiment and write CSV/VTK output")
    _add_common(p)
    p.add_argument("--vtk-every", dest="vtk_every", type=int, help="write a VTK file every k steps")
    p = sub.add_parser("converge-space", help="spatial convergence against a nested reference mesh")
    _add_common(p)
    p.add_argument("--meshes", help="comma-separated resolutions, e.g. 8,16,32")
    p.add_argument("--ref-n", dest="ref_n", type=int)
    p = sub.add_parser("converge-time", help="temporal convergence against a small reference step")
    _add_common(p)
    p.add_argument("--taus", help="comma-separated steps, e.g. 1/40,1/80,1/160")
    p.add_argument("--ref-tau", dest="ref_tau", type=str)
    sub.add_parser("check", help="structural self-checks")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.simplefilter("once", TraceViolationWarning)
    try:
        if args.command == "check":
            return cmd_check()
        manifest = build_manifest(args)
        if args.command == "run":
            return cmd_run(manifest)
        return cmd_converge(manifest, "space" if args.command == "converge-space" else "time")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"solver failure{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
