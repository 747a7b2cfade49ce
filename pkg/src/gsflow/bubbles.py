"""Bubble decompositions of a field: centres, weights, interaction and deficits.

A simple M-bubble is ``theta = sum_i xi(|x - x^i|)``; the best match minimises
``||u - theta||_L2`` over the centres. Weights ``alpha_i`` then come from the
linear system

    sum_j alpha_j Q_i(xi'_i, xi_j) = Q_i(xi'_i, u),
    Q_i(v, w) = int grad v . grad w + f'(xi_i) v w,

where ``xi_i = xi(|x - x^i|)`` and ``xi'_i`` is the radial derivative
``xi'(|x - x^i|)``. For a single bubble the diagonal ``Q(xi', xi)`` equals
``-(n - 1) int xi' xi / r^2 > 0`` when ``n >= 2``. In one dimension ``xi'(|x|)``
has a kink at the centre and the diagonal is ``-2 f(xi(0)) xi(0) > 0`` instead.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.ndimage import maximum_filter
from scipy.optimize import minimize

from .field import Field, energy, integrate, l2_norm, make_field, norms, sample_radial
from .ground_state import RadialProfile, unit_sphere_area
from .reaction import Nonlinearity, tail_concavity_expression

COND_MAX = 1e8
OPT_TOL = 1e-3
CONCAVITY_TOL = 1e-12


class FitError(RuntimeError):
    pass


class WeightSystemError(RuntimeError):
    pass


@dataclass(frozen=True)
class MBubble:
    centers: np.ndarray
    weights: np.ndarray
    profile: RadialProfile = field(repr=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, float))
        w = np.asarray(self.weights, float).ravel()
        if c.shape[0] < 1:
            raise ValueError("an M-bubble needs M >= 1")
        if w.size != c.shape[0]:
            raise ValueError("one weight per centre")
        for i in range(len(c)):
            for j in range(i):
                if np.array_equal(c[i], c[j]):
                    raise ValueError("centres must be pairwise distinct")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return len(self.centers)

    @property
    def is_simple(self) -> bool:
        return bool(np.all(self.weights == 1.0))

    def evaluate(self, grid) -> np.ndarray:
        out = grid.zeros()
        for c, a in zip(self.centers, self.weights):
            out += a * _bubble(self.profile, grid, c)
        return out

    def to_dict(self) -> dict:
        return {"M": self.M, "centers": self.centers.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class WeightSolution:
    """Solution of the weight system.

    ``diagonal`` holds the decoupled ratios ``Q_i(xi'_i, u) / Q_i(xi'_i, xi_i)``,
    which ignore the interaction between bubbles.
    """

    alpha: np.ndarray
    diagonal: np.ndarray
    Q: np.ndarray
    rhs: np.ndarray
    cond: float
    diag_dominant: bool
    residual: float


@dataclass(frozen=True, eq=False)
class FitResult:
    bubble: MBubble
    Gamma: float
    nu: float
    rho: Field = field(repr=False)
    ortho_translation: np.ndarray
    ortho_xi: np.ndarray
    deficit: float
    weights: WeightSolution = field(repr=False)
    stationarity: float
    restarts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            **self.bubble.to_dict(),
            "Gamma": self.Gamma,
            "nu": self.nu,
            "deficit": self.deficit,
            "rho_L2": l2_norm(self.rho.values, self.rho.grid),
            "ortho_translation": np.asarray(self.ortho_translation).tolist(),
            "ortho_xi": np.asarray(self.ortho_xi).tolist(),
            "diagonal_weights": self.weights.diagonal.tolist(),
            "cond": self.weights.cond,
            "stationarity": self.stationarity,
            "restarts": self.restarts,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _bubble(p: RadialProfile, grid, c, derivative: bool = False) -> np.ndarray:
    if grid.radial:
        return sample_radial(p, grid, None, derivative)
    return sample_radial(p, grid, c, derivative)


def _translation_derivatives(p: RadialProfile, grid, c) -> list:
    """``d/dx_k xi(|x - c|)`` for each axis (derivative with respect to x, not c)."""
    d = grid.distance(c)
    dxi = p.derivative(d)
    X = grid.coords()
    safe = np.where(d > 0, d, 1.0)
    return [np.where(d > 0, dxi * (X[k] - c[k]) / safe, 0.0) for k in range(grid.n)]


# best match --------------------------------------------------------------

def local_maxima(u: Field, M: int, separation: float) -> np.ndarray:
    """Top-M interior local maxima of ``u`` at mutual distance ``>= separation``."""
    g, v = u.grid, u.values
    size = max(3, 2 * int(round(0.5 * separation / g.h)) + 1)
    peak = (v == maximum_filter(v, size=size, mode="constant", cval=-np.inf)) & (v > 0)
    peak &= ~g.boundary_mask()
    idx = np.argwhere(peak)
    order = np.argsort(-v[tuple(idx.T)], kind="stable")
    chosen = []
    for k in order:
        pt = np.array([g.axes[a][idx[k][a]] for a in range(g.n)])
        if all(np.linalg.norm(pt - q) >= separation for q in chosen):
            chosen.append(pt)
        if len(chosen) == M:
            break
    if len(chosen) < M:
        raise FitError(f"found {len(chosen)} separated local maxima, need {M}")
    return np.array(chosen)


def _objective(flat, u, p, M):
    g = u.grid
    C = flat.reshape(M, g.n)
    r = -u.values.copy()
    for c in C:
        r += sample_radial(p, g, c)
    wr = g.weights * r
    val = float(np.sum(wr * r))
    grad = np.empty_like(C)
    for i, c in enumerate(C):
        # d/dc xi(|x - c|) = -grad_x xi(|x - c|)
        for k, dk in enumerate(_translation_derivatives(p, g, c)):
            grad[i, k] = -2.0 * float(np.sum(wr * dk))
    return val, grad.ravel()


def _descend(u, p, C0, maxiter):
    res = minimize(_objective, C0.ravel(), args=(u, p, len(C0)), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12, "maxcor": 20})
    return res.x.reshape(C0.shape), max(res.fun, 0.0)


def best_match(u: Field, p: RadialProfile, M: int, init_centers=None, nl: Nonlinearity | None = None,
               *, opt_tol: float = OPT_TOL, seed: int = 0, maxiter: int = 500,
               reference_energy: float | None = None) -> FitResult:
    """Best-matching simple M-bubble followed by the weight solve.

    Parameters
    ----------
    u : Field
    p : RadialProfile
    M : int
        Number of bubbles. On a radial grid only ``M = 1`` centred at the
        origin is representable.
    init_centers : array, optional
        Starting centres; defaults to the top-M separated local maxima of u.
    nl : Nonlinearity, optional
        Defaults to the profile's nonlinearity.
    opt_tol : float
        Relative first-order stationarity tolerance.
    seed : int
        Seeds the perturbed restart.
    reference_energy : float, optional
        Energy of one bubble for the deficit; defaults to the profile energy.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if not np.all(np.isfinite(u.values)):
        raise ValueError("u must be finite")
    nl = p.nl if nl is None else nl
    g = u.grid
    if p.n != g.n:
        raise ValueError("profile and grid dimensions differ")
    if g.radial:
        if M != 1:
            raise ValueError("radial grids hold a single centred bubble")
        C = np.zeros((1, 1))
        restarts = []
    else:
        sep = 2.0 * p.length_scale
        C0 = (np.atleast_2d(np.asarray(init_centers, float)) if init_centers is not None
              else local_maxima(u, M, sep))
        if C0.shape != (M, g.n):
            raise ValueError(f"init_centers must have shape {(M, g.n)}")
        rng = np.random.default_rng(seed)
        starts = [C0, C0 + rng.normal(scale=2 * g.h, size=C0.shape)]
        best, restarts = None, []
        for s in starts:
            C, val = _descend(u, p, s, maxiter)
            restarts.append(math.sqrt(val))
            if best is None or val < best[1]:
                best = (C, val)
        C = best[0]
        for i in range(M):
            for j in range(i):
                if np.linalg.norm(C[i] - C[j]) < 2 * g.h:
                    if M == 1:
                        raise FitError("centres collapsed")
                    warnings.warn(f"fitted centres {i} and {j} collapsed; refitting with M={M - 1}")
                    return best_match(u, p, M - 1, None, nl, opt_tol=opt_tol, seed=seed,
                                      maxiter=maxiter, reference_energy=reference_energy)
    theta = sum(_bubble(p, g, c) for c in C)
    diff = u.values - theta
    Gamma = l2_norm(diff, g)

    ortho = np.zeros((len(C), g.n))
    stat = 0.0
    if not g.radial:
        for i, c in enumerate(C):
            for k, dk in enumerate(_translation_derivatives(p, g, c)):
                ortho[i, k] = integrate(diff * dk, g)
                scale = Gamma * l2_norm(dk, g)
                stat = max(stat, abs(ortho[i, k]) / scale if scale > 0 else 0.0)
        # an exact fit leaves nothing to be stationary about
        if stat > opt_tol and Gamma > 1e-9 * l2_norm(u.values, g):
            raise FitError(f"optimizer stagnated: stationarity ratio {stat:.3g} > {opt_tol}")

    ws = solve_weights(u, C, p, nl)
    bub = MBubble(C, ws.alpha, p)
    eta = bub.evaluate(g)
    rho = make_field(g, u.values - eta, check=False)
    ortho_xi = np.array([_pair(p, g, c, u.values - eta, nl) for c in C])
    nu = interaction_level(p, g, C)
    J1 = p.energy() if reference_energy is None else reference_energy
    deficit = energy(u, nl) - len(C) * J1
    return FitResult(bub, Gamma, nu, rho, ortho, ortho_xi, deficit, ws, stat, restarts)


def interaction_level(p: RadialProfile, grid, centers) -> float:
    """``nu = sum_{i<j} int xi_i xi_j`` on the grid."""
    if grid.radial or len(centers) < 2:
        return 0.0
    bs = [_bubble(p, grid, c) for c in centers]
    return float(sum(integrate(bs[i] * bs[j], grid)
                     for i in range(len(bs)) for j in range(i)))


# weights --------------------------------------------------------------

def _pair(p, grid, c, w, nl, test=None, base=None):
    """``Q_c(xi'_c, w) = int grad xi'_c . grad w + f'(xi_c) xi'_c w``."""
    v = _bubble(p, grid, c, derivative=True) if test is None else test
    b = _bubble(p, grid, c) if base is None else base
    return grid.bilinear_gradient(v, w) + integrate(nl.df(b) * v * w, grid)


def solve_weights(u: Field, centers, p: RadialProfile, nl: Nonlinearity | None = None,
                  *, cond_max: float = COND_MAX) -> WeightSolution:
    """Solve the weight system for fixed centres (see the module docstring)."""
    nl = p.nl if nl is None else nl
    g = u.grid
    C = np.atleast_2d(np.asarray(centers, float))
    M = len(C)
    sep = 4.0 * p.length_scale
    for i in range(M):
        for j in range(i):
            if np.linalg.norm(C[i] - C[j]) < sep:
                raise WeightSystemError(f"centres {i}, {j} closer than {sep}")
    tests = [_bubble(p, g, c, derivative=True) for c in C]
    bases = [_bubble(p, g, c) for c in C]
    Q = np.empty((M, M))
    rhs = np.empty(M)
    for i in range(M):
        for j in range(M):
            Q[i, j] = _pair(p, g, C[i], bases[j], nl, tests[i], bases[i])
        rhs[i] = _pair(p, g, C[i], u.values, nl, tests[i], bases[i])
    scale = max(math.sqrt(g.gradient_energy(tests[0]) * 2 + integrate(tests[0] ** 2, g))
                * math.sqrt(g.gradient_energy(bases[0]) * 2 + integrate(bases[0] ** 2, g)), 1e-300)
    if np.min(np.diag(Q)) <= 1e-8 * scale:
        raise WeightSystemError("degenerate weight system: Q(xi', xi) is not positive")
    cond = float(np.linalg.cond(Q))
    if cond > cond_max:
        raise WeightSystemError(f"ill-conditioned weight system (cond {cond:.3g})")
    alpha = np.linalg.solve(Q, rhs)
    diag = np.diag(Q)
    off = np.sum(np.abs(Q), axis=1) - np.abs(diag)
    return WeightSolution(alpha, rhs / diag, Q, rhs, cond, bool(np.all(diag > off)),
                          float(np.max(np.abs(Q @ alpha - rhs))))


# interaction ----------------------------------------------------------

def _pair_quadrature(p: RadialProfile, x: float, r_excl: float = 0.0, n_theta: int = 256,
                     dr: float | None = None) -> float:
    """``int xi(|y|) xi(|y - x e|) dy`` over ``|y| > r_excl, |y - x e| > r_excl``."""
    n = p.n
    dr = p.h * 4 if dr is None else dr
    R = x + p.r_max
    if n == 1:
        y = np.arange(-p.r_max, R + dr / 2, dr)
        w = p(y) * p(y - x)
        w[(np.abs(y) <= r_excl) | (np.abs(y - x) <= r_excl)] = 0.0
        return float(simpson(w, x=y))
    rho = np.arange(0.0, R + dr / 2, dr)
    if n == 3:
        # s = |y - x e| turns the angular integral into a 1D one: dS = 2 pi rho s / x ds
        s = np.arange(0.0, R + p.r_max + dr, dr / 4)
        Pc = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(s) * (s[1:] * p(s[1:]) + s[:-1] * p(s[:-1])))])
        lo = np.maximum(np.abs(rho - x), r_excl)
        inner = np.interp(rho + x, s, Pc) - np.interp(lo, s, Pc)
        inner = np.where(rho + x > lo, inner, 0.0)
        integrand = 2 * np.pi * rho * p(rho) * inner / x if x > 0 else 4 * np.pi * rho**2 * p(rho) ** 2
        integrand[rho <= r_excl] = 0.0
        return float(simpson(integrand, x=rho))
    z, wz = np.polynomial.legendre.leggauss(n_theta)
    area = unit_sphere_area(n - 1)
    total = np.zeros_like(rho)
    for k, r in enumerate(rho):
        if r <= r_excl or r == 0:
            continue
        if x == 0:
            total[k] = unit_sphere_area(n) * r ** (n - 1) * p(r) ** 2
            continue
        cmax = (r * r + x * x - r_excl**2) / (2 * r * x) if r_excl > 0 else 1.0
        if cmax <= -1:
            continue
        t_lo = math.acos(min(cmax, 1.0))
        th = t_lo + (math.pi - t_lo) * 0.5 * (z + 1)
        s = np.sqrt(np.maximum(r * r + x * x - 2 * r * x * np.cos(th), 0.0))
        inner = 0.5 * (math.pi - t_lo) * np.sum(wz * p(s) * np.sin(th) ** (n - 2))
        total[k] = area * r ** (n - 1) * p(r) * inner
    return float(simpson(total, x=rho))


def interaction_g(p: RadialProfile, x: float, return_flag: bool = False):
    """Pairwise interaction ``g(x) = int xi(y) xi(y - x) dy``.

    Beyond ``2 r_max`` the value is extrapolated with the asymptotic law
    ``g(x) ~ c x xi(x)`` anchored at ``2 r_max``; ``return_flag=True`` also
    returns whether that happened.
    """
    if x < 0:
        raise ValueError("separation must be nonnegative")
    anchor = 2 * p.r_max
    if x <= anchor:
        val, extrap = _pair_quadrature(p, float(x)), False
    else:
        ga = _pair_quadrature(p, anchor)
        val = ga * (x * float(p(x))) / (anchor * float(p(anchor)))
        extrap = True
    return (val, extrap) if return_flag else val


def tail_remainder_fraction(p: RadialProfile, x: float, r: float) -> float:
    """Share of ``g(x)`` carried outside ``B_r(0) U B_r(x e)``."""
    full = _pair_quadrature(p, x)
    return _pair_quadrature(p, x, r_excl=r) / full


# diagnostics ----------------------------------------------------------

@dataclass(frozen=True)
class DeficitReport:
    deficit: float
    dudt_norm: float
    ratio_deficit: float
    alpha_term: float
    nu_term: float
    rho_L2: float
    rho_H1: float
    ratio_interaction: float
    qform: float
    qform_unit: float
    ratio_qform: float
    ratio_qform_unit: float
    degenerate: tuple

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _ratio(a, b, tiny=1e-14):
    return a / b if abs(b) > tiny else math.nan


def deficit_report(u: Field, fit: FitResult, nl: Nonlinearity, dudt_norm: float) -> DeficitReport:
    """Both sides of the deficit, weak-interaction and coercivity inequalities.

    (a) ``J(u) - M J(xi)`` against ``||u_t||^2``;
    (b) ``sum |1 - alpha_i| + nu`` against ``||rho|| + ||u_t||``;
    (c) ``int 2|grad rho|^2 + f'(eta) rho^2`` against ``||rho||_H1^2``. The
        variant with unit gradient weight (the second variation) is also kept.

    Ratios whose denominator vanishes are returned as NaN and listed in
    ``degenerate``.
    """
    g = u.grid
    eta = fit.bubble.evaluate(g)
    rho = fit.rho.values
    nr = norms(fit.rho)
    grad2 = 2.0 * g.gradient_energy(rho)
    pot = integrate(nl.df(np.maximum(eta, 0.0)) * rho * rho, g)
    qform = 2.0 * grad2 + pot
    qunit = grad2 + pot
    h1sq = nr.L2**2 + grad2
    a_term = float(np.sum(np.abs(1.0 - fit.bubble.weights)))
    ra = _ratio(fit.deficit, dudt_norm**2)
    rb = _ratio(a_term + fit.nu, nr.L2 + dudt_norm)
    rc = _ratio(qform, h1sq)
    rcu = _ratio(qunit, h1sq)
    degenerate = tuple(name for name, v in (("deficit", ra), ("interaction", rb), ("qform", rc))
                       if math.isnan(v))
    return DeficitReport(fit.deficit, dudt_norm, ra, a_term, fit.nu, nr.L2, math.sqrt(h1sq), rb,
                         qform, qunit, rc, rcu, degenerate)


def tail_concavity_check(nl: Nonlinearity, xs, delta: float | None = None,
                         tol: float = CONCAVITY_TOL) -> bool:
    """Whether ``F(sum x) - sum F(x_i) - sum_{i<j} f(x_i) x_j <= tol``."""
    xs = np.asarray(xs, float)
    if np.any(xs < 0):
        raise ValueError("entries must be nonnegative")
    delta = nl.concavity_radius() if delta is None else delta
    if not xs.sum() < delta:
        raise ValueError(f"sum {xs.sum()} outside the concavity radius {delta}")
    return tail_concavity_expression(nl, xs) <= tol
