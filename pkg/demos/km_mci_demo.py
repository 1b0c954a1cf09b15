"""Small MCI-style Kaplan-Meier curve whose band is lopsided near S = 0.97.

33 patients, one delirium event at half a month, the rest censored at a
year. At 6 months S = 32/33 and the log-log band sits much closer to S
above than below, the same shape as an interval like 96.97 (80.37-99.57).

    python3 demos/km_mci_demo.py [out_dir]
"""

import sys
from pathlib import Path

from delirium_risk.plots import km_svg, write_svg
from delirium_risk.survival import km_fit, observations


def mci_style_curve(transform="loglog"):
    return km_fit(observations([0.5] + [12.0] * 32, [1] + [0] * 32), transform=transform)


def main(out_dir="demo_out"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve = mci_style_curve()
    lines = ["time_months,n_at_risk,n_events,survival,var,ci_lo,ci_hi"]
    lines += [",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) for row in curve.rows()]
    (out / "km_curve_demo.csv").write_text("\n".join(lines) + "\n")
    write_svg(km_svg({"MCI (demo)": curve}, t_max=12.0), out / "km_demo.svg")

    s, lo, hi = curve.at(6.0)
    print(f"S(6) = {100 * s:.2f}% (95% CI: {100 * lo:.2f}-{100 * hi:.2f})")
    print(f"distance above {hi - s:.4f}, below {s - lo:.4f}")
    lin = mci_style_curve("linear")
    s, lo, hi = lin.at(6.0)
    print(f"linear band for comparison: {100 * lo:.2f}-{100 * hi:.2f} (clipped at 100)")


if __name__ == "__main__":
    main(*sys.argv[1:])
