"""Radial ground states of ``Delta xi = f(xi)`` by shooting.

The radial equation ``xi'' + (n-1)/r xi' = f(xi)`` is integrated with a fixed
step RK4 scheme from a regular centre. Bisection on ``xi(0)`` separates
trajectories that cross zero (too large a start) from trajectories that turn
upward while still positive (too small a start).

Double precision limits how far a shot trajectory can follow the separatrix:
the unstable tail mode grows like ``exp(m r)`` against a decaying ``exp(-m r)``.
The profile therefore keeps the shot values only while the two final bracket
trajectories agree to ``RELIABLE_REL`` and continues past that radius with the
decaying solution of the linearised tail equation,
``c (m r)^(-nu) K_nu(m r)`` with ``nu = (n-2)/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np
from scipy import special

from .reaction import Nonlinearity

RELIABLE_REL = 1e-6
TABLE_EXTENT = 4.0
CROSS, TURN, UNDECIDED = -1, 1, 0


class ShootingError(RuntimeError):
    """Raised when no bracket exists or the integrated profile fails its residual check."""


@numba.njit(cache=True)
def _f(x, a0, coef, expo):
    s = a0 * x
    if x > 0.0:
        for k in range(coef.shape[0]):
            s -= coef[k] * x ** expo[k]
    return s


@numba.njit(cache=True)
def _trajectory(x0, n, h, nsteps, a0, coef, expo, out_x, out_d):
    """RK4 from a series start; stops at the first crossing or upturn."""
    f0 = _f(x0, a0, coef, expo)
    out_x[0] = x0
    out_d[0] = 0.0
    x = x0 + f0 * h * h / (2.0 * n)
    d = f0 * h / n
    out_x[1] = x
    out_d[1] = d
    nm1 = n - 1.0
    for i in range(1, nsteps):
        r = i * h
        rh = r + 0.5 * h
        k1x = d
        k1d = _f(x, a0, coef, expo) - nm1 * d / r
        x2 = x + 0.5 * h * k1x
        d2 = d + 0.5 * h * k1d
        k2x = d2
        k2d = _f(x2, a0, coef, expo) - nm1 * d2 / rh
        x3 = x + 0.5 * h * k2x
        d3 = d + 0.5 * h * k2d
        k3x = d3
        k3d = _f(x3, a0, coef, expo) - nm1 * d3 / rh
        x4 = x + h * k3x
        d4 = d + h * k3d
        k4x = d4
        k4d = _f(x4, a0, coef, expo) - nm1 * d4 / (r + h)
        x += h * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        d += h * (k1d + 2.0 * k2d + 2.0 * k3d + k4d) / 6.0
        out_x[i + 1] = x
        out_d[i + 1] = d
        if x < 0.0:
            return i + 1, -1
        if d > 0.0:
            return i + 1, 1
    return nsteps, 0


@numba.njit(cache=True)
def _hermite(r, h, xi, dxi, deriv, out):
    """Cubic Hermite interpolant on the uniform grid ``k h``; NaN past the last node."""
    last = xi.shape[0] - 1
    for i in range(r.shape[0]):
        x = abs(r[i])
        k = int(x / h)
        if k >= last:
            if x == last * h:
                out[i] = dxi[last] if deriv else xi[last]
            else:
                out[i] = np.nan
            continue
        t = x / h - k
        y0, y1 = xi[k], xi[k + 1]
        m0, m1 = dxi[k] * h, dxi[k + 1] * h
        if deriv:
            t2 = t * t
            out[i] = ((6 * t2 - 6 * t) * (y0 - y1) + (3 * t2 - 4 * t + 1) * m0
                      + (3 * t2 - 2 * t) * m1) / h
        else:
            t2 = t * t
            t3 = t2 * t
            out[i] = ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0
                      + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1)


def _integrate(nl: Nonlinearity, n: int, x0: float, h: float, nsteps: int):
    xs = np.empty(nsteps + 1)
    ds = np.empty(nsteps + 1)
    last, status = _trajectory(float(x0), float(n), float(h), int(nsteps), nl.a0,
                               nl.coefficients, nl.exponents, xs, ds)
    return xs[: last + 1], ds[: last + 1], int(status)


def classify_shot(nl: Nonlinearity, n: int, x0: float, r_max: float, h: float):
    """Classify one shot: ``(status, r_event)`` with status CROSS, TURN or UNDECIDED."""
    xs, _, status = _integrate(nl, n, x0, h, int(round(r_max / h)))
    return status, (len(xs) - 1) * h


def tail_shape(n: int, m: float, r):
    """Decaying radial solution of ``Delta w = m^2 w`` and its r-derivative.

    Returned unnormalised: ``T(r) = (m r)^(-nu) K_nu(m r)`` with ``nu = (n-2)/2``,
    written with the scaled Bessel function to avoid underflow.
    """
    r = np.asarray(r, dtype=float)
    nu = (n - 2) / 2.0
    z = m * r
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        scale = np.exp(-z) * z ** (-nu)
        T = scale * special.kve(nu, z)
        dT = -m * scale * special.kve(nu + 1.0, z)
    return T, dT


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Ground state on a uniform radial grid.

    ``m`` is the tail decay rate ``sqrt(f'(0))``; the tail behaves like
    ``exp(-m r) / max(r^((n-1)/2), 1)``. ``r_reliable`` is the radius up to
    which values come from the shot trajectory; beyond it the linearised tail
    is used.
    """

    r: np.ndarray
    xi: np.ndarray
    dxi: np.ndarray
    m: float
    n: int
    h: float
    nl: Nonlinearity
    shoot_value: float
    tol: float
    r_reliable: float
    tail_coef: float

    def __post_init__(self):
        for a in (self.r, self.xi, self.dxi):
            a.setflags(write=False)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def length_scale(self) -> float:
        return 1.0 / self.m

    @property
    def center_value(self) -> float:
        return float(self.xi[0])

    @cached_property
    def _table(self):
        """Profile extended by the tail law to ``TABLE_EXTENT * r_max`` on the same step."""
        k = len(self.r)
        rr = self.h * np.arange(k, int(round(TABLE_EXTENT * self.r_max / self.h)) + 1)
        T, dT = tail_shape(self.n, self.m, rr)
        return (np.concatenate([self.xi, self.tail_coef * T]),
                np.concatenate([self.dxi, self.tail_coef * dT]))

    def _eval(self, r, deriv: int):
        r = np.asarray(r, dtype=float)
        flat = np.ascontiguousarray(r).ravel()
        out = np.empty_like(flat)
        _hermite(flat, self.h, *self._table, deriv, out)
        outside = np.isnan(out)
        if outside.any():
            out[outside] = self.tail_coef * tail_shape(self.n, self.m, np.abs(flat[outside]))[deriv]
        out = out.reshape(r.shape)
        return out if out.ndim else float(out)

    def __call__(self, r):
        """Evaluate ``xi`` at arbitrary radii (Hermite cubic inside, tail law outside)."""
        return self._eval(r, 0)

    def derivative(self, r):
        """``xi'`` at arbitrary radii."""
        return self._eval(r, 1)

    def ode_residual(self) -> np.ndarray:
        """``xi'' + (n-1)/r xi' - f(xi)`` on interior nodes inside the reliable range."""
        k = int(self.r_reliable / self.h)
        xi, dxi, r, h = self.xi[: k + 1], self.dxi[: k + 1], self.r[: k + 1], self.h
        d2 = (xi[2:] - 2 * xi[1:-1] + xi[:-2]) / h**2
        return d2 + (self.n - 1) / r[1:-1] * dxi[1:-1] - self.nl.f(xi[1:-1])

    def energy(self) -> float:
        """``J(xi)`` by high-order radial quadrature on the profile grid."""
        from scipy.integrate import simpson

        dens = (0.5 * self.dxi**2 + self.nl.F(self.xi)) * self.r ** (self.n - 1)
        return float(unit_sphere_area(self.n) * simpson(dens, x=self.r))

    # I/O
    def to_csv(self, path, extra: dict | None = None) -> None:
        meta = {"n": self.n, "m": self.m, "h": self.h,
                "shoot_value": repr(float(self.shoot_value)), "tol": self.tol,
                "r_reliable": self.r_reliable, "tail_coef": repr(float(self.tail_coef)),
                "a0": self.nl.a0, "terms": ";".join(f"{a}:{p}" for a, p in self.nl.terms)}
        meta.update(extra or {})
        with open(path, "w") as fh:
            for k, v in meta.items():
                fh.write(f"# {k}={v}\n")
            fh.write("r,xi,dxi\n")
            np.savetxt(fh, np.column_stack([self.r, self.xi, self.dxi]), delimiter=",",
                       fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "RadialProfile":
        meta = {}
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                k, v = line[1:].strip().split("=", 1)
                meta[k] = v
        data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=len(meta) + 1))
        terms = tuple(tuple(float(x) for x in t.split(":")) for t in meta["terms"].split(";"))
        nl = Nonlinearity(float(meta["a0"]), terms)
        r, xi = data[:, 0], data[:, 1]
        n = int(meta["n"])
        if data.shape[1] > 2:
            dxi = data[:, 2]
        else:
            # xi' from the radial ODE integrated in flux form, exact to quadrature order
            dxi = _derivative_from_ode(r, xi, n, nl)
        return cls(r, xi, dxi, float(meta["m"]), n, float(meta["h"]), nl,
                   float(meta["shoot_value"]), float(meta["tol"]), float(meta["r_reliable"]),
                   float(meta["tail_coef"]))


def _derivative_from_ode(r, xi, n, nl):
    # r^(n-1) xi'(r) = int_0^r s^(n-1) f(xi(s)) ds
    from scipy.integrate import cumulative_simpson

    g = r ** (n - 1) * nl.f(xi)
    flux = cumulative_simpson(g, x=r, initial=0.0)
    out = np.zeros_like(r)
    out[1:] = flux[1:] / r[1:] ** (n - 1)
    return out


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def shoot(nl: Nonlinearity, n: int, r_max: float | None = None, h: float | None = None,
          tol: float = 1e-15, max_expansions: int = 60) -> RadialProfile:
    """Compute the radial ground state by bisection on the central value.

    Parameters
    ----------
    nl : Nonlinearity
    n : int
        Spatial dimension.
    r_max : float, optional
        Outer radius of the profile grid; at least ``20/m``. Defaults to ``20/m``.
    h : float, optional
        RK4 step, at most ``1/(50 m)``. Defaults to ``1e-3/m``.
    tol : float
        Bisection stops when the bracket width is below ``tol * xi(0)`` or the
        bracket can no longer be split in double precision.

    Raises
    ------
    ShootingError
        No crossing trajectory exists in the scan range (no ground state), or
        the integrated profile fails the ODE residual check.
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    m = nl.decay_rate
    L = 1.0 / m
    r_max = 20.0 * L if r_max is None else float(r_max)
    h = 1e-3 * L if h is None else float(h)
    if r_max < 20.0 * L * (1 - 1e-12):
        raise ValueError(f"r_max={r_max} must be at least 20/m = {20 * L}")
    if h > L / 50.0 * (1 + 1e-12):
        raise ValueError(f"h={h} must not exceed 1/(50 m) = {L / 50}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    nsteps = int(round(r_max / h))

    def status(x0):
        return _integrate(nl, n, x0, h, nsteps)[2]

    # below the zero of f the trajectory turns up immediately
    lo = nl.positive_zero()
    hi = 2.0 * lo
    for _ in range(max_expansions):
        s = status(hi)
        if s == CROSS:
            break
        lo = hi if s == TURN else lo
        hi *= 2.0
    else:
        raise ShootingError("no crossing trajectory found: no ground state for these parameters")

    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        s = status(mid)
        if s == CROSS:
            hi = mid
        elif s == TURN:
            lo = mid
        else:
            lo = hi = mid
            break

    # sensitivity of the trajectory to the last few representable start values
    eps = 8 * np.finfo(float).eps
    lo, hi = min(lo, 0.5 * (lo + hi) * (1 - eps)), max(hi, 0.5 * (lo + hi) * (1 + eps))
    x_lo, d_lo, _ = _integrate(nl, n, lo, h, nsteps)
    x_hi, d_hi, _ = _integrate(nl, n, hi, h, nsteps)
    k = min(len(x_lo), len(x_hi))
    scale = np.maximum(np.abs(x_lo[:k]), np.finfo(float).tiny)
    bad = np.flatnonzero((np.abs(x_lo[:k] - x_hi[:k]) > RELIABLE_REL * scale)
                         | (x_lo[:k] <= 0) | (d_lo[:k] > 0) | (x_hi[:k] <= 0))
    cut = (bad[0] if bad.size else k) - 1
    cut = min(cut, nsteps)
    if cut < 10:
        raise ShootingError("shot trajectory unreliable from the start")

    r = np.arange(nsteps + 1) * h
    xi = np.empty(nsteps + 1)
    dxi = np.empty(nsteps + 1)
    xs = 0.5 * (x_lo[: cut + 1] + x_hi[: cut + 1])
    ds = 0.5 * (d_lo[: cut + 1] + d_hi[: cut + 1])
    xi[: cut + 1] = xs
    dxi[: cut + 1] = ds
    r_cut = r[cut]
    T, dT = tail_shape(n, m, r[cut:])
    c = xs[-1] / T[0]
    xi[cut:] = c * T
    dxi[cut:] = c * dT
    dxi[0] = 0.0

    prof = RadialProfile(r, xi, dxi, m, n, h, nl, 0.5 * (lo + hi), tol, float(r_cut), float(c))
    res = np.abs(prof.ode_residual())
    scale = 1.0 + float(np.max(np.abs(nl.f(xi))))
    if res.max() > 50.0 * h**2 * m**2 * scale * max(1.0, xi[0]) + 1e-9:
        raise ShootingError(f"ODE residual {res.max():.3e} too large; step size too coarse")
    return prof


@dataclass(frozen=True)
class DecayReport:
    r_lo: float
    r_hi: float
    band_min: float
    band_max: float
    ratio_min: float
    ratio_max: float

    @property
    def band_width_ratio(self) -> float:
        return self.band_max / self.band_min


def decay_report(p: RadialProfile, r_lo: float, r_hi: float | None = None) -> DecayReport:
    """Bands of ``xi e^{m r} max(r^{(n-1)/2}, 1)`` and ``-xi'/xi`` over ``[r_lo, r_hi]``."""
    r_hi = p.r_max if r_hi is None else float(r_hi)
    if r_lo < 2.0 * p.length_scale * (1 - 1e-12):
        raise ValueError("r_lo must be at least 2/m")
    sel = (p.r >= r_lo) & (p.r <= r_hi)
    if sel.sum() < 50:
        raise ValueError("fewer than 50 grid nodes in the tail window")
    r, xi, dxi = p.r[sel], p.xi[sel], p.dxi[sel]
    band = xi * np.exp(p.m * r) * np.maximum(r ** ((p.n - 1) / 2), 1.0)
    ratio = -dxi / xi
    return DecayReport(float(r[0]), float(r[-1]), float(band.min()), float(band.max()),
                       float(ratio.min()), float(ratio.max()))


def emden_fowler_defect(r, xi, n: int, reaction_ratio) -> np.ndarray:
    """Relative defect of ``w'' = w (a(a-1)/r^2 + f(xi)/xi)`` with ``w = r^a xi``.

    ``reaction_ratio`` holds ``f(xi)/xi`` at the nodes. Second differences
    approximate ``w''``; the defect is divided by ``|w|`` node-wise.
    """
    if n < 2:
        raise ValueError("the Emden-Fowler transform needs n >= 2")
    r = np.asarray(r, float)
    h = r[1] - r[0]
    a = (n - 1) / 2.0
    w = r**a * np.asarray(xi, float)
    d2 = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    rhs = w[1:-1] * (a * (a - 1) / r[1:-1] ** 2 + np.asarray(reaction_ratio)[1:-1])
    return np.abs(d2 - rhs) / np.abs(w[1:-1])


def emden_fowler_residual(p: RadialProfile, r_lo: float | None = None) -> float:
    """Max relative Emden-Fowler defect over tail nodes ``[r_lo, r_reliable]``."""
    if p.n < 2:
        raise ValueError("the Emden-Fowler transform needs n >= 2")
    r_lo = 2.0 * p.length_scale if r_lo is None else r_lo
    sel = (p.r >= r_lo - p.h) & (p.r <= p.r_reliable)
    r, xi = p.r[sel], p.xi[sel]
    return float(emden_fowler_defect(r, xi, p.n, p.nl.f(xi) / xi).max())
