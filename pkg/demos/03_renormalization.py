"""From a parabolic germ to a blender: the quadratic family lambda z + z^2 over w^2.

Near lambda0 = exp(2 pi i / 3) the third iterate of the skew product, seen through
a rescaling, is close to rho z + eps c(w). This script prints the pieces.

Run: python3 demos/03_renormalization.py   (about 15 s)
"""
import numpy as np

from blenderlab.blender import build_vertical_neighborhoods, certify_repelling_blender
from blenderlab.cpoly import Polynomial
from blenderlab.planar import triangle_cover
from blenderlab.renorm import (ParabolicFamily, assembled_map, closed_form_iterate, good_triple_search,
                               perturbation_plan, renorm_recursion)

fam = ParabolicFamily.quadratic(3)
q = Polynomial.monomial(2)

# first-order term of the iterate: recursion and closed form agree
_, g1 = renorm_recursion(fam, fam.lambda0, q, 0.2, 3)
cf = closed_form_iterate(fam, fam.lambda0, q, 0.2, 1)
z, w = 0.3 + 0.1j, 0.8 * np.exp(0.4j)
print(f"first-order term at (z, w) = ({z}, {w:.3f}): recursion {complex(g1(z, w)):.6f}, "
      f"closed form {complex(cf(z, w)):.6f}")

# three period-3 points of w^2 whose c-values sum to zero span the covering triangle
trio, c = good_triple_search(q, fam, strict=False)
print("triple:", ", ".join(f"{complex(o.points[0]):.4f}" for o in trio))
cc = triangle_cover(*c)

lam = 1.001 * fam.lambda0
p0 = perturbation_plan(fam, lam, cc, "repelling")
nb = build_vertical_neighborhoods(q, trio, p0.l_n)
plan = perturbation_plan(fam, lam, cc, "repelling", q, nb)
print(f"plan: l_n = {plan.l_n}, |rho_n| = {abs(plan.rho_n):.6f}, |eps_n| = {abs(plan.epsilon_n):.3g}")

_, g, s = assembled_map(fam, plan, q)
bc = certify_repelling_blender(g, cc, nb, plan.rho_n)
print(bc.certificate().summary())
