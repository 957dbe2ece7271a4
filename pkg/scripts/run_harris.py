"""Confined Harris sheet with and without the Hall term; compares B_z on the mid-plane z = 0.5."""

import argparse
from pathlib import Path

import numpy as np

from hallfem.diagnostics import write_csv, write_vtk
from hallfem.feec import evaluate_at_points
from hallfem.scheme import SchemeConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--tau", type=float, default=0.01)
    ap.add_argument("--T", type=float, default=0.15)
    ap.add_argument("--out", type=Path, default=Path("out/harris"))
    args = ap.parse_args()

    x, y = np.meshgrid(np.linspace(0.01, 0.99, 99), np.linspace(0.25, 0.75, 51))
    plane = np.stack([x.ravel(), y.ravel(), np.full(x.size, 0.5)], axis=1)
    for eta in (0.15, 0.0):
        cfg = SchemeConfig.from_preset("harris", n=args.n, tau=args.tau, T=args.T, eta=eta)
        r = run(cfg, keep_states=False)
        write_csv(r.rows, args.out / f"harris_eta{eta:g}_diag.csv")
        write_vtk(r.disc, r.final, args.out / f"harris_eta{eta:g}_step{r.final.step}.vtk")
        bz = evaluate_at_points(r.disc.Bs, r.final.B, plane)[:, 2]
        print(f"eta={eta:g}: B_z on z=0.5 near the sheet in [{bz.min():.3e}, {bz.max():.3e}]")


if __name__ == "__main__":
    main()
