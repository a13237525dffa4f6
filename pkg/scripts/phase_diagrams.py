"""Phase-diagram data for two unsupervised tasks.

* results/risk_surface.csv: c = 0.7, (lambda1, lambda2) in [0, 3]^2 on a 61x61 grid,
  with the solver risk of both tasks.
* results/impossible_region_c<c>.csv: feasibility on [0, 1]^2 (101x101) for
  c in {0, 0.25, 0.5, 0.75, 1}; the impossible region shrinks as c grows.

    python3 scripts/phase_diagrams.py
"""
import time
from pathlib import Path

from mtgmm.model import two_task
from mtgmm.phase import Axis, grid_csv, scan

OUT = Path(__file__).resolve().parents[1] / "results"


def main():
    OUT.mkdir(exist_ok=True)
    started = time.perf_counter()
    grid = scan(two_task(0.7), [Axis("lambda1", 0, 3, 61), Axis("lambda2", 0, 3, 61)], with_risk=True)
    (OUT / "risk_surface.csv").write_text(grid_csv(grid))
    print(f"risk surface: {int(grid.feasible.sum())} of {grid.feasible.size} cells feasible")

    axes = [Axis("lambda1", 0, 1, 101), Axis("lambda2", 0, 1, 101)]
    for c in (0.0, 0.25, 0.5, 0.75, 1.0):
        grid = scan(two_task(c), axes)
        (OUT / f"impossible_region_c{c:g}.csv").write_text(grid_csv(grid))
        print(f"c={c:<4g}: impossible fraction {1 - grid.feasible.mean():.3f}")
    print(f"done in {time.perf_counter() - started:.1f} s")


if __name__ == "__main__":
    main()
