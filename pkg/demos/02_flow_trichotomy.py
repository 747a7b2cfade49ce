# Scale the ground state and watch the flow: below 1 it dies, above 1 it blows up.
import numpy as np

from gsflow import Nonlinearity, RadialGrid, make_field, run, shoot
from gsflow.field import discrete_ground_state, sample_radial
from gsflow.flow import dissipation_residual

nl = Nonlinearity.power(2)
p = shoot(nl, 3)
g = RadialGrid(3, 30.0, 1e-2)
xi = sample_radial(p, g)

for scale in (0.9, 1.1):
    s = run(make_field(g, scale * xi), nl, 20.0, 1e-2)
    print(f"u0 = {scale} xi -> {s.event.value} at t = {s.event_time:.2f}")

# the energy drop matches the time-integrated ||u_t||^2
s = run(make_field(g, 0.9 * xi), nl, 5.0, 1e-3, stop_on_converged=False)
for rule in ("quotient", "mixed", "closed"):
    print(f"dissipation residual ({rule:8s}): {dissipation_residual(s, (1.0, 5.0), rule=rule):.3e}")

# the sampled profile is a saddle of the discrete flow; its Newton-polished
# version is an exact discrete equilibrium and stays put
xh = discrete_ground_state(p, g)
s = run(xh, nl, 5.0, 1e-2, stop_on_converged=False)
print("||u(5) - xi_h||_inf =", np.abs(s.u.values - xh.values).max())
