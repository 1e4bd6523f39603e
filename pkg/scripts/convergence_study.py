"""Time-step refinement study on the desk configuration.

Prints, per dt, the end-state error against a fine reference, the energy
defect spread and the weak residual, with observed orders.

    python scripts/convergence_study.py --config configs/desk.ini
"""
import argparse
import math

import numpy as np

from benard_tss.config import load_config
from benard_tss.integrator import check_energy_inequalities, integrate
from benard_tss.operators import weak_residual
from benard_tss.pipeline import build_discretization, smooth_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", default="configs/desk.ini")
    ap.add_argument("--horizon", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scheme", default="etdrk2")
    args = ap.parse_args()

    disc = build_discretization(load_config(args.config))
    z0 = smooth_state(disc.ops, args.seed, disc.consts.R0)
    dts = [0.02 / 2 ** k for k in range(5)]
    ref = integrate(disc.ops, None, z0, 0.0, args.horizon, dts[-1] / 4, args.scheme).samples[-1]

    rows = []
    for dt in dts:
        traj = integrate(disc.ops, None, z0, 0.0, args.horizon, dt, args.scheme)
        en = check_energy_inequalities(traj, disc.ops)
        spread = max(c.info["max_abs_defect_spread"] for c in en.checks)
        rows.append((dt, float(np.linalg.norm(traj.samples[-1] - ref)), spread,
                     weak_residual(traj, disc.ops).max_abs))
    print(f"{'dt':>10} {'error':>11} {'order':>6} {'defect':>11} {'order':>6} "
          f"{'residual':>11} {'order':>6}")
    for prev, row in zip([None] + rows, rows):
        cells = [f"{row[0]:10.5f}"]
        for k in (1, 2, 3):
            order = f"{math.log2(prev[k] / row[k]):6.2f}" if prev else ""
            cells.append(f"{row[k]:11.3e} {order:>6}")
        print(" ".join(cells))

if __name__ == "__main__":
    main()
