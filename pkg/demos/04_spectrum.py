# Second variation at the ground state: one negative direction, translations in
# the kernel, and coercivity once both are projected out.
from gsflow import Nonlinearity, RadialGrid, assemble_Q, constrained_coercivity, shoot, spectrum

nl = Nonlinearity.power(2)
p = shoot(nl, 3)
rep = spectrum(assemble_Q(p, nl, RadialGrid(3, 30.0, 1e-3)), k=6)
print("lowest eigenvalues:", [round(x, 6) for x in rep.eigenvalues])
print("negative:", rep.n_negative, " kernel:", rep.kernel_dim, f"(tol {rep.kernel_tol:.1e})")
print("Q(xi', xi') =", rep.q_xi_xi_prime, " Q(xi', xi) =", rep.q_xi_prime_xi)

op = assemble_Q(p, nl, RadialGrid(3, 20.0, 2e-2))
print("constrained coercivity:", constrained_coercivity(op).constant)
print("without the xi' constraint:", constrained_coercivity(op, enforce_xi_prime=False).constant)
