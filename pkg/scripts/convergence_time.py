"""Temporal convergence of the Orszag-Tang run on a fixed mesh."""

import argparse
from fractions import Fraction
from pathlib import Path

from hallfem.convergence import FIELDS, temporal_study, write_rate_table
from hallfem.scheme import SchemeConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--taus", default="1/40,1/80,1/160")
    ap.add_argument("--ref-tau", default="1/800")
    ap.add_argument("--T", type=float, default=0.05)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/convergence"))
    args = ap.parse_args()

    cfg = SchemeConfig.from_preset("orszag-tang", n=args.n, T=args.T)
    taus = [float(Fraction(t)) for t in args.taus.split(",")]
    res = temporal_study(cfg, taus, float(Fraction(args.ref_tau)), jobs=args.jobs)
    write_rate_table(res, args.out / "orszag-tang_rates_time.csv")
    for k in FIELDS:
        print(f"{k}: errors {[f'{e:.4g}' for e in res.errors[k]]}, fitted rate {res.fitted_rate(k):.3f}")


if __name__ == "__main__":
    main()
