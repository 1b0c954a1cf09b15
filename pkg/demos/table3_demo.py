"""Recompute the printed comorbidity table from its own proportions.

Counts are rebuilt as round(p * n); Wald intervals and uncorrected
chi-square p-values are then printed next to the published cells.

    python3 demos/table3_demo.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from table3 import N, contrasts, parse_cell, ROWS  # noqa: E402

from delirium_risk.stats import compare_counts, wald_ci  # noqa: E402


def main():
    print(f"{'condition':30s} {'group':>9s} {'printed':>22s} {'recomputed':>22s}")
    for row in ROWS:
        for j, cell in enumerate((row[1], row[2], row[5], row[6])):
            p, _, _ = parse_cell(cell)
            e = wald_ci(round(p * N[j]), N[j])
            print(f"{row[0]:30s} {j:>9d} {cell:>22s} {str(e):>22s}")
    print()
    print(f"{'condition':30s} {'contrast':>9s} {'printed p':>10s} {'p':>8s} {'bold':>5s}")
    for cond, name, k1, n1, k2, n2, printed, bold in contrasts():
        r = compare_counts(cond, k1, n1, k2, n2)
        p = "n/a" if r.p_value is None else f"{r.p_value:.4f}"
        print(f"{cond:30s} {name:>9s} {printed:>10s} {p:>8s} {'*' if bold else '':>5s}")


if __name__ == "__main__":
    main()
