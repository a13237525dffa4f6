"""Risk of an unlabeled task helped by a correlated labeled task.

lambda = (4, 4), alpha = (0.1, 0.2), eta = (0, 1); sweeps c over [0, 1] and
writes results/correlation_sweep.csv.  At c = 1 the pair behaves as one task with
alpha = 0.3 and eta = 2/3, printed for comparison.

    python3 scripts/correlation_sweep.py
"""
from pathlib import Path

import numpy as np

from mtgmm.model import two_task
from mtgmm.phase import fmt
from mtgmm.solver import risk_report, single_task

OUT = Path(__file__).resolve().parents[1] / "results" / "correlation_sweep.csv"


def main():
    OUT.parent.mkdir(exist_ok=True)
    lines = ["c,risk_task1,risk_task2"]
    for c in np.linspace(0, 1, 21):
        r = risk_report(two_task(c, lam=(4, 4), alpha=(0.1, 0.2), eta=(0, 1))).risk
        lines.append(f"{fmt(c)},{fmt(r[0])},{fmt(r[1])}")
        print(f"c={c:4.2f}  risk={r.round(5)}")
    OUT.write_text("\n".join(lines) + "\n")
    print(f"combined single task: {risk_report(single_task(4.0, 0.3, 2 / 3)).risk[0]:.8f}")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
