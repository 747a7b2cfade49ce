# Threshold scaling of a Gaussian bump and the ground state it passes near.
import numpy as np

from gsflow import (Nonlinearity, RadialGrid, bisect_threshold, make_field,
                    near_threshold_profile_check, shoot)

nl = Nonlinearity.power(2)
p = shoot(nl, 3)
g = RadialGrid(3, 30.0, 2e-2)
bump = make_field(g, 0.5 * np.exp(-g.r**2 / 18.0))

res = bisect_threshold(bump, nl, (2.0, 4.0), tol_alpha=1e-7)
print(f"alpha in [{res.alpha_lo:.9f}, {res.alpha_hi:.9f}] after {len(res.classifications)} probes")
pc = near_threshold_profile_check(res, p)
print(f"plateau at t = {pc.t_plateau:.2f}: ||u_t||/||u|| = {pc.plateau_ratio:.3f}, "
      f"distance to xi relative to ||u|| = {pc.relative_error:.3f}")
