"""The regularised integrands F_j.

Each F_j truncates the dual to |z| <= j, mollifies at scale delta_j and
shifts down by mu_j, which makes the sequence nondecreasing in j and
j-Lipschitz. This script prints the monotone chain at a few points for
|x| and for the minimal-surface integrand, together with how F_j approaches F.
"""
import sys
from pathlib import Path

import numpy as np

from varidual import ApproximationSchedule, build_approximant, catalog, default_pair, svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "out")
out.mkdir(parents=True, exist_ok=True)
sched = ApproximationSchedule(2, 20)
pts = np.array([[-1.0], [0.0], [0.5], [1.5]])

for kind in ("abs_value", "minimal_surface"):
    spec = catalog(kind)
    pair = default_pair(spec, 20)
    print(f"{kind}: F at {pts.ravel().tolist()} = {np.round(spec.values(pts), 6).tolist()}")
    series = []
    grid = np.linspace(-2, 2, 401)[:, None]
    for j in (2, 5, 20):
        a = build_approximant(pair, j, sched, [(-2.5, 2.5)])
        print(f"  F_{j:<2d} = {np.round(a.value(pts), 6).tolist()}  "
              f"(delta = {sched.delta(j):.2e}, mu = {sched.mu(j):.4f})")
        series.append((f"F_{j}", grid[:, 0], a.value(grid)))
    series.append(("F", grid[:, 0], spec.values(grid)))
    svg.write(out / f"chain_{kind}.svg", svg.line_plot(series, f"{kind}: F_2 <= F_5 <= F_20 <= F"))
print("the gap to F at j is close to mu_j = 1/(j - 1), the downward shift that keeps the chain ordered")
