"""Second variation ``Q = -Delta + f'(xi)`` about a ground state.

On radial grids the operator splits into angular-momentum sectors

    Q_l = -d^2/dr^2 - (n-1)/r d/dr + l(l+n-2)/r^2 + f'(xi(r)),

each discretised by finite volumes as a symmetric tridiagonal pencil
``(A_l, V)``. Translations ``d_i xi = xi'(r) x_i / r`` live in the ``l = 1``
sector, so the n-fold kernel shows up there as a single near-zero
eigenvalue of multiplicity n. Sectors ``l >= 1`` carry a Dirichlet condition at
the origin.

On Cartesian boxes the operator is the (2n+1)-point Laplacian plus the
potential, assembled as a sparse matrix for shift-invert Lanczos.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigh_tridiagonal, null_space
from scipy.sparse.linalg import LinearOperator, eigsh

from .field import BoxGrid, RadialGrid, sample_radial
from .ground_state import RadialProfile
from .reaction import Nonlinearity

KERNEL_FACTOR = 10.0
IDENTITY_TOL = 1e-4


class EigenError(RuntimeError):
    pass


def harmonic_multiplicity(n: int, l: int) -> int:
    """Dimension of degree-l spherical harmonics on ``S^(n-1)``."""
    def comb(a, b):
        return math.comb(a, b) if a >= 0 and b >= 0 else 0
    return comb(n + l - 1, l) - comb(n + l - 3, l - 2)


class RadialQ:
    """Sector-wise second variation on a radial grid."""

    def __init__(self, p: RadialProfile, nl: Nonlinearity, grid: RadialGrid):
        if p.n != grid.n:
            raise ValueError("profile and grid dimensions differ")
        self.p, self.nl, self.grid = p, nl, grid
        self.n = grid.n
        self.xi = sample_radial(p, grid)
        self.dxi = sample_radial(p, grid, derivative=True)
        self.potential = nl.df(np.maximum(self.xi, 0.0))
        r = grid.r[:-1]
        self._V = grid.volumes[:-1]
        K = grid.stiffness.tocsr()
        self._kd = K.diagonal()
        self._ko = K.diagonal(1)
        with np.errstate(divide="ignore"):
            self._inv_r2 = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0) ** 2, 0.0)

    @property
    def h(self) -> float:
        return self.grid.h

    def _first(self, l: int) -> int:
        return 0 if l == 0 else 1

    def pencil(self, l: int, potential=None):
        """Tridiagonal ``(diag, off, V)`` of the sector form on the active nodes."""
        pot = self.potential if potential is None else potential
        c = l * (l + self.n - 2)
        i0 = self._first(l)
        d = self._kd + self._V * (c * self._inv_r2 + pot[:-1])
        return d[i0:], self._ko[i0:], self._V[i0:]

    def _embed(self, v, l):
        out = np.zeros(self.grid.shape)
        out[self._first(l):-1] = v
        return out

    def _restrict(self, u, l):
        return np.asarray(u)[self._first(l):-1]

    def apply(self, u, l: int = 0, potential=None) -> np.ndarray:
        """Strong form ``Q_l u`` (per unit volume) on the grid nodes."""
        d, e, V = self.pencil(l, potential)
        x = self._restrict(u, l)
        y = d * x
        y[:-1] += e * x[1:]
        y[1:] += e * x[:-1]
        return self._embed(y / V, l)

    def pair(self, u, w, l: int = 0, potential=None) -> float:
        """Bilinear form ``Q_l(u, w)`` including the sphere area factor."""
        d, e, _ = self.pencil(l, potential)
        x, y = self._restrict(u, l), self._restrict(w, l)
        s = float(np.dot(d * x, y) + np.dot(e * x[1:], y[:-1]) + np.dot(e * x[:-1], y[1:]))
        return self.grid.area * s

    def mass(self, u, w, l: int = 0) -> float:
        _, _, V = self.pencil(l)
        return self.grid.area * float(np.dot(V * self._restrict(u, l), self._restrict(w, l)))

    def eigen(self, l: int, k: int):
        d, e, V = self.pencil(l)
        s = 1.0 / np.sqrt(V)
        k = min(k, len(d))
        w, vec = eigh_tridiagonal(d * s * s, e * s[:-1] * s[1:], select="i",
                                  select_range=(0, k - 1))
        return w, vec * s[:, None]

    def translation_residual(self) -> float:
        """``||Q_1 xi'|| / ||xi'||``: how far the sampled translation mode is from the kernel."""
        q = self.apply(self.dxi, 1)
        num = self.mass(q, q, 1)
        den = self.mass(self.dxi, self.dxi, 1)
        return math.sqrt(num / den)


class CartesianQ:
    """Second variation on a box with zero Dirichlet data, bubble at the origin."""

    def __init__(self, p: RadialProfile, nl: Nonlinearity, grid: BoxGrid):
        if p.n != grid.n:
            raise ValueError("profile and grid dimensions differ")
        clearance = 5.0 * p.length_scale
        if min(grid.R) < clearance:
            raise ValueError(f"box half-width below the tail clearance {clearance}")
        self.p, self.nl, self.grid = p, nl, grid
        self.n = grid.n
        self.xi = sample_radial(p, grid)
        self.potential = nl.df(np.maximum(self.xi, 0.0))
        self._shape = tuple(N - 2 for N in grid.shape)
        self.size = int(np.prod(self._shape))

    @property
    def h(self) -> float:
        return self.grid.h

    def matrix(self) -> sp.csr_matrix:
        h = self.grid.h
        mats = []
        for N in self._shape:
            mats.append(sp.diags([-np.ones(N - 1), 2 * np.ones(N), -np.ones(N - 1)], [-1, 0, 1]) / h**2)
        L = sp.csr_matrix((self.size, self.size))
        for k, Tk in enumerate(mats):
            ops = [sp.identity(N, format="csr") for N in self._shape]
            ops[k] = Tk
            term = ops[0]
            for o in ops[1:]:
                term = sp.kron(term, o, format="csr")
            L = L + term
        return (L + sp.diags(self.potential[self.grid.interior].ravel())).tocsr()

    def operator(self) -> LinearOperator:
        return LinearOperator((self.size, self.size), matvec=self._matvec, dtype=float)

    def _matvec(self, x):
        u = self._embed(np.asarray(x).ravel())
        return self.apply(u)[self.grid.interior].ravel()

    def _embed(self, x):
        u = self.grid.zeros()
        u[self.grid.interior] = x.reshape(self._shape)
        return u

    def apply(self, u, l=None, potential=None) -> np.ndarray:
        pot = self.potential if potential is None else potential
        out = -self.grid.laplacian(u) + pot * u
        out[self.grid.boundary_mask()] = 0.0
        return out

    def pair(self, u, w, l=None, potential=None) -> float:
        q = self.apply(u, potential=potential)
        return float(np.sum(q[self.grid.interior] * np.asarray(w)[self.grid.interior])) * self.h**self.n

    def mass(self, u, w, l=None) -> float:
        return float(np.sum(np.asarray(u)[self.grid.interior] * np.asarray(w)[self.grid.interior])) * self.h**self.n

    def translation_modes(self) -> list:
        g = self.grid
        d = g.distance(np.zeros(g.n))
        dxi = sample_radial(self.p, g, derivative=True)
        X = g.coords()
        safe = np.where(d > 0, d, 1.0)
        out = []
        for k in range(g.n):
            m = np.where(d > 0, dxi * X[k] / safe, 0.0)
            m[g.boundary_mask()] = 0.0
            out.append(m)
        return out

    def radial_derivative(self) -> np.ndarray:
        v = sample_radial(self.p, self.grid, derivative=True)
        v[self.grid.boundary_mask()] = 0.0
        return v

    def translation_residual(self) -> float:
        worst = 0.0
        for m in self.translation_modes():
            q = self.apply(m)
            worst = max(worst, math.sqrt(self.mass(q, q) / self.mass(m, m)))
        return worst


def assemble_Q(p: RadialProfile, nl: Nonlinearity | None, grid):
    """Second variation about ``xi`` on a radial grid (sectors) or a Cartesian box."""
    nl = p.nl if nl is None else nl
    if isinstance(grid, RadialGrid):
        if grid.R < 5.0 * p.length_scale:
            raise ValueError("radial grid shorter than the tail clearance")
        return RadialQ(p, nl, grid)
    if isinstance(grid, BoxGrid):
        return CartesianQ(p, nl, grid)
    raise TypeError("grid must be a RadialGrid or a BoxGrid")


@dataclass
class SpectralReport:
    eigenvalues: list
    n_negative: int
    kernel_dim: int
    q_xi_xi_prime: float
    q_xi_prime_xi: float
    coercivity_constant: float | None
    kernel_tol: float
    translation_residual: float
    identity_error: float | None
    sectors: dict = field(default_factory=dict)
    multiplicities: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def kernel_tolerance(opQ) -> float:
    """``10 h^2 ||f'(xi)||_inf``: discrete translation modes are eigenvectors only to O(h^2)."""
    return KERNEL_FACTOR * opQ.h**2 * float(np.max(np.abs(opQ.potential)))


def xi_prime_identity(opQ: RadialQ, psis) -> float:
    """Largest relative gap between ``Q(xi', psi)`` and ``-(n-1) int xi' psi / r^2``."""
    n = opQ.n
    r = opQ.grid.r
    worst = 0.0
    for psi in psis:
        lhs = opQ.pair(opQ.dxi, psi, 0)
        rhs = -(n - 1) * opQ.grid.area * float(np.sum(
            opQ.grid.volumes[1:-1] * opQ.dxi[1:-1] * psi[1:-1] / r[1:-1] ** 2))
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300))
    return worst


def random_radial_fields(grid: RadialGrid, count: int, rng, length: float = 1.0) -> list:
    """Smooth radial test functions: random Gaussian mixtures of width ~ ``length``."""
    r = grid.r
    out = []
    for _ in range(count):
        k = rng.integers(1, 4)
        amp = rng.normal(size=k)
        width = length * rng.uniform(0.5, 3.0, size=k)
        shift = length * rng.uniform(0.0, 3.0, size=k)
        psi = sum(a * np.exp(-((r - s) / w) ** 2) for a, w, s in zip(amp, width, shift))
        # smooth at the origin: even extension needs zero slope there
        psi = psi * (1 - np.exp(-(r / length) ** 2)) + psi[0] * np.exp(-(r / length) ** 2)
        psi[-1] = 0.0
        out.append(psi)
    return out


def spectrum(opQ, k: int = 6, sectors=(0, 1, 2), identity_trials: int = 20, seed: int = 0,
             kernel_tol: float | None = None) -> SpectralReport:
    """Lowest eigenvalues with kernel/negative counts and the ``xi'`` pairings.

    Radial operators report the union of the sector spectra, each eigenvalue
    repeated with its harmonic multiplicity.
    """
    n = opQ.n
    if k < n + 2:
        raise ValueError(f"need k >= n + 2 = {n + 2}")
    ktol = kernel_tolerance(opQ) if kernel_tol is None else kernel_tol
    res = opQ.translation_residual()
    sectors_out = {}
    if isinstance(opQ, RadialQ):
        vals, mults = [], []
        for l in sectors:
            mult = harmonic_multiplicity(n, l)
            if mult == 0:
                continue
            w, _ = opQ.eigen(l, k)
            sectors_out[l] = w.tolist()
            for x in w:
                vals.extend([float(x)] * mult)
                mults.append((float(x), l, mult))
        order = np.argsort(vals, kind="stable")
        eig = [vals[i] for i in order][:k]
        psis = random_radial_fields(opQ.grid, identity_trials, np.random.default_rng(seed),
                                    opQ.p.length_scale)
        ident = xi_prime_identity(opQ, psis) if n >= 2 else None
        qpp = opQ.pair(opQ.dxi, opQ.dxi, 0)
        qpx = opQ.pair(opQ.dxi, opQ.xi, 0)
    else:
        A = opQ.matrix()
        sigma = -float(np.max(np.abs(opQ.potential))) - 1.0
        try:
            w = eigsh(A, k=k, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-12)
        except Exception as exc:  # ARPACK reports non-convergence via several types
            raise EigenError(str(exc)) from exc
        eig = sorted(float(x) for x in w)
        mults = []
        ident = None
        v = opQ.radial_derivative()
        qpp = opQ.pair(v, v)
        qpx = opQ.pair(v, opQ.xi)
    n_neg = sum(1 for x in eig if x < -ktol)
    kdim = sum(1 for x in eig if abs(x) <= ktol)
    return SpectralReport(eig, n_neg, kdim, qpp, qpx, None, ktol, res, ident, sectors_out, mults)


# coercivity -----------------------------------------------------------

def _sector_forms(opQ: RadialQ, l: int):
    d, e, V = opQ.pencil(l)
    A = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    pot_one = np.ones_like(opQ.potential)
    dh, eh, _ = opQ.pencil(l, pot_one)
    H = np.diag(dh) + np.diag(eh, 1) + np.diag(eh, -1)
    return A, H


@dataclass(frozen=True)
class CoercivityResult:
    constant: float
    sector_minima: dict
    trial_minimum: float
    unconstrained_minimum: float
    trials_used: int
    trials_excluded: int


def constrained_coercivity(opQ, p: RadialProfile | None = None, trials: int = 100, seed: int = 0,
                           enforce_xi_prime: bool = True, sectors=(0, 1, 2)) -> CoercivityResult:
    """Minimum of ``Q(phi, phi) / ||phi||_H1^2`` under the orthogonality constraints.

    The constraints are ``<phi, d_i xi> = 0`` for every i and ``Q(xi', phi) = 0``.
    On radial grids the first family acts on the ``l = 1`` component and the
    second on the ``l = 0`` component; ``l >= 2`` is unconstrained and its
    quotient only grows with l. The exact constrained minimum per sector comes
    from a dense generalized eigenproblem on the null space of the constraint;
    ``trials`` random smooth fields are projected and evaluated alongside.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if not isinstance(opQ, RadialQ):
        return _cartesian_coercivity(opQ, trials, seed, enforce_xi_prime)
    rng = np.random.default_rng(seed)
    n = opQ.n
    active = [l for l in sectors if harmonic_multiplicity(n, l) > 0]
    forms = {l: _sector_forms(opQ, l) for l in active}
    minima = {}
    free_min = math.inf
    for l in active:
        A, H = forms[l]
        free_min = min(free_min, float(eigh(A, H, eigvals_only=True, subset_by_index=[0, 0])[0]))
        xp = opQ._restrict(opQ.dxi, l)
        c = None
        if l == 0 and enforce_xi_prime:
            c = A @ xp
        elif l == 1:
            c = opQ.pencil(1)[2] * xp
        if c is None:
            minima[l] = float(eigh(A, H, eigvals_only=True, subset_by_index=[0, 0])[0])
            continue
        N = null_space(c[None, :] / np.linalg.norm(c))
        if N.shape[1] != len(c) - 1:
            raise np.linalg.LinAlgError("constraint projection is rank deficient")
        minima[l] = float(eigh(N.T @ A @ N, N.T @ H @ N, eigvals_only=True,
                               subset_by_index=[0, 0])[0])

    trial_min, used, excluded = math.inf, 0, 0
    psis = random_radial_fields(opQ.grid, trials, rng, opQ.p.length_scale)
    for k, psi in enumerate(psis):
        l = active[k % len(active)]
        A, H = forms[l]
        x = opQ._restrict(psi, l).copy()
        xp = opQ._restrict(opQ.dxi, l)
        before = math.sqrt(float(x @ H @ x))
        if l == 0 and enforce_xi_prime:
            x -= float(xp @ A @ x) / float(xp @ A @ xp) * xp
        elif l == 1:
            V = opQ.pencil(1)[2]
            x -= float(np.dot(V * xp, x)) / float(np.dot(V * xp, xp)) * xp
        hx = float(x @ H @ x)
        if hx <= 1e-20 * before**2:
            excluded += 1
            continue
        trial_min = min(trial_min, float(x @ A @ x) / hx)
        used += 1
    const = min(min(minima.values()), trial_min)
    return CoercivityResult(const, minima, trial_min, free_min, used, excluded)


def _cartesian_coercivity(opQ: CartesianQ, trials: int, seed: int, enforce_xi_prime: bool):
    """Rayleigh-Ritz over projected random smooth fields, refined by residual steps."""
    from scipy.ndimage import gaussian_filter

    g = opQ.grid
    inner = g.interior
    w = g.h**g.n
    rng = np.random.default_rng(seed)
    modes = [m[inner].ravel() for m in opQ.translation_modes()]
    xp = opQ.radial_derivative()
    Qxp = opQ.apply(xp)[inner].ravel()
    # constraint functionals c(v) = C v and the directions they are removed along
    C = np.array(modes + ([Qxp] if enforce_xi_prime else [])) * w
    D = np.array(modes + ([xp[inner].ravel()] if enforce_xi_prime else []))
    G = C @ D.T
    if np.linalg.matrix_rank(G) < len(D):
        raise np.linalg.LinAlgError("constraint projection is rank deficient")

    def project(X):
        return X - np.linalg.solve(G, C @ X.T).T @ D

    def apply_rows(X, potential=None):
        out = np.empty_like(X)
        for k, x in enumerate(X):
            out[k] = opQ._matvec(x) if potential is None else \
                (opQ.apply(opQ._embed(x), potential=potential)[inner].ravel())
        return out

    one = np.ones(g.shape)
    r2 = g.distance(np.zeros(g.n))[inner].ravel() ** 2
    raw = np.array([gaussian_filter(rng.normal(size=g.shape), sigma=1.0 / g.h)[inner].ravel()
                    * np.exp(-0.1 * r2) for _ in range(trials)])
    Hraw = apply_rows(raw, one)
    X = project(raw)
    HX = apply_rows(X, one)
    hx = np.einsum("ij,ij->i", X, HX) * w
    before = np.einsum("ij,ij->i", raw, Hraw) * w
    keep = hx > 1e-20 * before
    excluded = int(np.sum(~keep))
    X, HX, hx = X[keep], HX[keep], hx[keep]
    QX = apply_rows(X)
    trial_min = float(np.min(np.einsum("ij,ij->i", X, QX) * w / hx))

    B, QB, HB = X, QX, HX
    mu = trial_min
    for _ in range(5):
        A = B @ QB.T * w
        H = B @ HB.T * w
        A, H = 0.5 * (A + A.T), 0.5 * (H + H.T)
        ev, V = eigh(A, H + 1e-13 * np.trace(H) / len(H) * np.eye(len(H)))
        mu = float(ev[0])
        ritz, qr, hr = V[:, 0] @ B, V[:, 0] @ QB, V[:, 0] @ HB
        resid = project((qr - mu * hr)[None, :])
        hres = apply_rows(resid, one)
        nr = float(np.sum(resid * hres) * w)
        if nr <= 0:
            break
        resid, hres = resid / math.sqrt(nr), hres / math.sqrt(nr)
        B = np.vstack([B, resid])
        QB = np.vstack([QB, apply_rows(resid)])
        HB = np.vstack([HB, hres])
    const = min(mu, trial_min)
    return CoercivityResult(const, {"cartesian": mu}, trial_min, math.nan, int(np.sum(keep)), excluded)
