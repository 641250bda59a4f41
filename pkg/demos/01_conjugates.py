"""Discrete conjugates and convex hulls.

Samples three integrands on a grid, takes the discrete Legendre-Fenchel
transform and transforms back. For a convex integrand the biconjugate
reproduces it up to grid error; for a double well it returns the convex
hull, flattening the region between the wells. The linear-growth
certificate then reads the growth rate of the minimal-surface integrand off
its conjugate.
"""
import sys
from pathlib import Path

import numpy as np

from varidual import (SampledConvexFunction, biconjugate, catalog, check_demi_coercivity, conjugate,
                      grid_axis, recession, sample, svg)

out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "out")
out.mkdir(parents=True, exist_ok=True)

ms = catalog("minimal_surface")
pair = conjugate(sample(ms, [(-4, 4)], 1e-3), [(-1.5, 1.5)], 1e-3)
bi = biconjugate(pair, [(-2, 2)], 1e-2)
x = bi.axes[0]
print("minimal surface: max |F** - F| on [-2, 2] =",
      f"{np.max(np.abs(bi.values - ms.values(x[:, None]))):.2e}")
print(f"recession F^inf(1) = {float(recession(ms, [1.0])):.9f}")

# a nonconvex double well (x^2 - 1)^2: the biconjugate is its convex hull
xs = grid_axis(-2, 2, 1e-3)
well = SampledConvexFunction([xs], (xs ** 2 - 1) ** 2)
wpair = conjugate(well, [(-30, 30)], 1e-2)
hull = biconjugate(wpair, [(-2, 2)], 1e-2)
inside = np.abs(hull.axes[0]) <= 1
print("double well: hull value on [-1, 1] is", f"{np.max(np.abs(hull.values[inside])):.1e}")

cert = check_demi_coercivity(conjugate(sample(ms, [(-1, 1)], 1e-2), [(-3, 3)], 1e-2).dual, [0.0], 1.0)
print(f"growth certificate at r = 1: ok = {cert.ok}, c = {cert.c:.6f}")

svg.write(out / "double_well_hull.svg", svg.line_plot(
    [("F", xs, (xs ** 2 - 1) ** 2), ("F**", hull.axes[0], hull.values)], "double well and its hull"))
print("wrote", out / "double_well_hull.svg")
