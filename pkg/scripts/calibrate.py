#!/usr/bin/env python3
"""Regenerate the recorded calibration constants.

Writes <outdir>/constants.txt with the measured maxima of the
interpolation-inequality ratios, the smoothed-dynamics Lipschitz bound,
and the empirically stable time steps. The regression tests compare
fresh measurements against this file (ratios within 1.05x, dt exact),
so rerun it deliberately and commit the result whenever the generator,
the schemes, or the probe families change.
"""

import argparse

from llbar.experiments import StudySpec, find_stable_dt, run_gn_calibration
from llbar.grid import Grid
from llbar.io import read_config, write_config


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="calibration")
    ap.add_argument("--n", type=int, default=32, help="grid points per axis")
    ap.add_argument("--family-size", type=int, default=100)
    args = ap.parse_args()

    spec = StudySpec(
        kind="gn_calibration",
        n=args.n,
        family_size=args.family_size,
        outdir=args.outdir,
    )
    report = run_gn_calibration(spec)
    print(report.summary())

    path = f"{args.outdir}/constants.txt"
    constants = read_config(path)
    for grid_n in (args.n, 2 * args.n):
        dt = find_stable_dt(Grid(2, grid_n))
        constants[f"dt_stable_2d_n{grid_n}"] = repr(dt)
        print(f"dt_stable_2d_n{grid_n} = {dt}")
    write_config(
        path,
        constants,
        header="calibrated constants: inequality-ratio maxima over the seeded\n"
        "family, Lipschitz bound of the smoothed dynamics, and stable dt",
    )
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
