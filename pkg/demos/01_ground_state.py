# Radial ground state of Delta xi = xi - xi^2 in three dimensions, by shooting.
import numpy as np

from gsflow import Nonlinearity, decay_report, shoot
from gsflow.ground_state import emden_fowler_residual

nl = Nonlinearity.power(2)  # f(t) = t - t^2
p = shoot(nl, 3)
print("xi(0)       =", p.center_value)
print("J(xi)       =", p.energy())
print("shot trusted up to r =", p.r_reliable, "then the exponential tail takes over")

# tail: xi(r) e^r r is flat and -xi'/xi tends to 1
d = decay_report(p, 8.0, 16.0)
print("band xi e^r r over [8, 16]: %.6f .. %.6f" % (d.band_min, d.band_max))
print("-xi'/xi over [8, 16]:       %.4f .. %.4f" % (d.ratio_min, d.ratio_max))
print("Emden-Fowler defect:", emden_fowler_residual(p))

# one dimension has closed forms to compare against
r = np.linspace(0, 20, 2001)
q = shoot(nl, 1)
print("1D sup error vs 1.5 sech^2(r/2):", np.abs(q(r) - 1.5 / np.cosh(r / 2) ** 2).max())
q3 = shoot(Nonlinearity.power(3), 1)
print("1D sup error vs sqrt2 sech(r):  ", np.abs(q3(r) - np.sqrt(2) / np.cosh(r)).max())
