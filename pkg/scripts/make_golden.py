"""Regenerate tests/data/unsupervised_pair_risk.csv (two tasks, c = 0.7, unsupervised).

The phase boundary of the grid is checked against the two-task closed form
before anything is written.

    python3 scripts/make_golden.py
"""
from pathlib import Path

import numpy as np

from mtgmm.model import two_task
from mtgmm.phase import Axis, grid_csv, scan

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "unsupervised_pair_risk.csv"
C12 = 0.7
AXES = (Axis("lambda1", 0.0, 3.0, 13), Axis("lambda2", 0.0, 3.0, 13))


def closed_form_feasible(l1, l2, c=C12):
    # impossible iff I - R is PSD: both diagonal entries and the determinant nonnegative
    impossible = l1 <= 1 and l2 <= 1 and (1 - l1**2) * (1 - l2**2) >= c**4 * l1**2 * l2**2
    return not impossible


def main():
    grid = scan(two_task(C12), AXES, with_risk=True, threads=1)
    for i, l1 in enumerate(AXES[0].values):
        for j, l2 in enumerate(AXES[1].values):
            expected = closed_form_feasible(l1, l2)
            if grid.feasible[i, j] != expected:
                raise SystemExit(f"boundary mismatch at lambda = ({l1}, {l2})")
            if grid.feasible[i, j] != bool(np.any(grid.risk[i, j] < 0.5)):
                raise SystemExit(f"solver and spectrum disagree at lambda = ({l1}, {l2})")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(grid_csv(grid))
    print(f"wrote {OUT} ({int(grid.feasible.sum())} feasible of {grid.feasible.size})")


if __name__ == "__main__":
    main()
