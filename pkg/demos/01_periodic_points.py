"""Periodic points and multipliers of one-variable polynomials.

Run: python3 demos/01_periodic_points.py
"""
import numpy as np

from blenderlab.cpoly import Polynomial, parse_polynomial, periodic_points

# w^7 has seven fixed points: 0 (superattracting) and the six roots of w^6 = 1,
# each with multiplier 7
for o in periodic_points(Polynomial.monomial(7), 1):
    z = o.points[0]
    print(f"{z.real:+.6f}{z.imag:+.6f}i  multiplier {o.multiplier.real:+.3f}  {o.classification}")

# a hand-written polynomial and its period-3 cycles; the count 2^3 - 2 = 6 points
# splits into two cycles of exact period 3
text = "w^2 + 0.3i"
q = parse_polynomial(text)
cycles = periodic_points(q, 3)
exact = [o for o in cycles if o.period == 3]
print(f"\n{text}: {len(exact)} cycles of exact period 3")
for o in exact:
    print(f"  |multiplier| = {abs(o.multiplier):.6f}  {o.classification}")

# the parabolic point of w^2 + 1/4 has a double fixed point; it is reported once
fix = periodic_points(Polynomial([0.25, 0, 1]), 1)
print(f"\nw^2 + 1/4: {len(fix)} fixed point(s), multiplier {np.round(fix[0].multiplier, 10)}")
