"""Energy of a jump under a linear-growth integrand.

A unit step has no weak derivative, but smoothing it at width eps gives
functions whose minimal-surface energies approach |Omega| F(0) + |jump| F^inf(1)
= 2. Under the quadratic integrand the same recoveries blow up like 1/eps.
"""
import sys
from pathlib import Path

from varidual import GridDomain, JumpField, bv_representation_check, catalog, svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "out")
out.mkdir(parents=True, exist_ok=True)

dom = GridDomain(1, 1, 0.01, 100)
step = JumpField(dom.zeros(), [(0.5, 1.0)])
eps = [0.1, 0.05, 0.025, 0.0125, 0.00625]
hs = [e / 100 for e in eps]

for kind in ("minimal_surface", "quadratic"):
    table = bv_representation_check(step, catalog(kind), eps, hs)
    target = "+inf" if table.infinite_target else f"{table.target:.6f}"
    print(f"{kind}: target {target}")
    for row in table.rows:
        err = "" if row["rel_error"] is None else f"  relative error {row['rel_error']:.2%}"
        print(f"  eps = {row['eps']:<8g} energy = {row['energy']:.6f}{err}")
    if kind == "minimal_surface":
        svg.write(out / "bv_step.svg", svg.line_plot(
            [("energy", eps, [r["energy"] for r in table.rows]), ("target", eps, [2.0] * len(eps))],
            "mollified step energy vs eps", markers=True))
print("wrote", out / "bv_step.svg")
