"""Spatial convergence of the Orszag-Tang run against a nested reference mesh."""

import argparse
from pathlib import Path

from hallfem.convergence import FIELDS, spatial_study, write_rate_table
from hallfem.scheme import SchemeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--meshes", default="8,16,32")
    ap.add_argument("--ref-n", type=int, default=64)
    ap.add_argument("--tau", type=float, default=0.0025)
    ap.add_argument("--T", type=float, default=0.05)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/convergence"))
    args = ap.parse_args()

    cfg = SchemeConfig.from_preset("orszag-tang", tau=args.tau, T=args.T)
    res = spatial_study(cfg, [int(m) for m in args.meshes.split(",")], args.ref_n, jobs=args.jobs)
    write_rate_table(res, args.out / "orszag-tang_rates_space.csv")
    for k in FIELDS:
        print(f"{k}: errors {[f'{e:.4g}' for e in res.errors[k]]}, fitted rate {res.fitted_rate(k):.3f}")


if __name__ == "__main__":
    main()
