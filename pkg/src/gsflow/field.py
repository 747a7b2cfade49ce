"""Discrete fields on Cartesian boxes and radial grids.

Both grids carry a symmetric second-order Laplacian with homogeneous
Dirichlet data on the outer boundary, and a discrete energy

    J_h(u) = 1/2 * sum_edges w_e (du_e / h)^2 + sum_nodes w_i F(u_i)

whose L2 gradient (with respect to the node weights) is exactly
``-Delta_h u + f(u)``. Keeping the energy and the Laplacian paired this way
makes the discrete dissipation identity hold to the order of the time scheme.

Radial grids use control volumes ``V_i = (r_{i+1/2}^n - r_{i-1/2}^n)/n`` and
face weights ``r_{i+1/2}^{n-1}`` times the area of the unit sphere.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .ground_state import RadialProfile, unit_sphere_area
from .reaction import Nonlinearity

BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class BoxGrid:
    """Uniform Cartesian grid on ``prod_k [-R_k, R_k]`` with spacing h."""

    n: int
    R: tuple
    h: float

    def __post_init__(self):
        R = self.R
        R = tuple(float(R) for _ in range(self.n)) if np.isscalar(R) else tuple(float(x) for x in R)
        if len(R) != self.n:
            raise ValueError("need one half-width per axis")
        if self.n not in (1, 2, 3):
            raise ValueError("Cartesian grids support n in {1, 2, 3}")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "h", float(self.h))

    radial = False

    @cached_property
    def shape(self) -> tuple:
        return tuple(int(round(2 * r / self.h)) + 1 for r in self.R)

    @cached_property
    def axes(self) -> list:
        return [-r + self.h * np.arange(N) for r, N in zip(self.R, self.shape)]

    def coords(self) -> list:
        return np.meshgrid(*self.axes, indexing="ij", sparse=True)

    def distance(self, center) -> np.ndarray:
        c = np.asarray(center, float)
        X = self.coords()
        d2 = sum((X[k] - c[k]) ** 2 for k in range(self.n))
        return np.sqrt(d2)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights (the boundary carries half weight, values there vanish)."""
        w = np.ones(self.shape) * self.h**self.n
        for k in range(self.n):
            idx = [slice(None)] * self.n
            for end in (0, -1):
                idx[k] = end
                w[tuple(idx)] *= 0.5
        return w

    @cached_property
    def interior(self) -> tuple:
        return tuple(slice(1, N - 1) for N in self.shape)

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        """Standard (2n+1)-point Laplacian; zero on boundary nodes."""
        out = np.zeros_like(u)
        core = out[self.interior]
        for k in range(self.n):
            lo = list(self.interior)
            hi = list(self.interior)
            lo[k] = slice(0, -2)
            hi[k] = slice(2, None)
            core += u[tuple(lo)] + u[tuple(hi)]
        core -= 2 * self.n * u[self.interior]
        out[self.interior] = core / self.h**2
        return out

    def gradient_energy(self, u: np.ndarray) -> float:
        """``1/2 int |grad u|^2`` with edge differences."""
        s = 0.0
        for k in range(self.n):
            s += float(np.sum(np.diff(u, axis=k) ** 2))
        return 0.5 * s * self.h ** (self.n - 2)

    def bilinear_gradient(self, u: np.ndarray, v: np.ndarray) -> float:
        """``int grad u . grad v`` with edge differences."""
        s = 0.0
        for k in range(self.n):
            s += float(np.sum(np.diff(u, axis=k) * np.diff(v, axis=k)))
        return s * self.h ** (self.n - 2)

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, bool)
        mask[self.interior] = False
        return mask

    def boundary_ring(self, u: np.ndarray) -> np.ndarray:
        return u[self.boundary_mask()]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid ``r_i = i h``, ``i = 0..N``, with ``u(R) = 0``."""

    n: int
    R: float
    h: float

    radial = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be at least 1")
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "h", float(self.h))

    @cached_property
    def shape(self) -> tuple:
        return (int(round(self.R / self.h)) + 1,)

    @cached_property
    def r(self) -> np.ndarray:
        return self.h * np.arange(self.shape[0])

    @cached_property
    def area(self) -> float:
        return unit_sphere_area(self.n)

    @cached_property
    def volumes(self) -> np.ndarray:
        """Control volumes ``V_i`` (without the sphere area)."""
        r, h, n = self.r, self.h, self.n
        up = np.minimum(r + h / 2, self.R)
        dn = np.maximum(r - h / 2, 0.0)
        return (up**n - dn**n) / n

    @cached_property
    def faces(self) -> np.ndarray:
        """Face weights ``r_{i+1/2}^{n-1}`` for the N edges."""
        return (self.r[:-1] + self.h / 2) ** (self.n - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.area * self.volumes

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix ``K`` with ``u^T K u = sum faces (du)^2 / h`` on nodes ``0..N-1``."""
        c = self.faces / self.h
        N = self.shape[0] - 1
        main = np.zeros(N)
        main += c[:N]
        main[1:] += c[: N - 1]
        off = -c[: N - 1]
        return sp.diags([off, main, off], [-1, 0, 1], format="csr")

    def laplacian(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        out[:-1] = -(self.stiffness @ u[:-1]) / self.volumes[:-1]
        return out

    def gradient_energy(self, u: np.ndarray) -> float:
        return 0.5 * self.area * float(np.sum(self.faces * np.diff(u) ** 2)) / self.h

    def bilinear_gradient(self, u: np.ndarray, v: np.ndarray) -> float:
        return self.area * float(np.sum(self.faces * np.diff(u) * np.diff(v))) / self.h

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, bool)
        mask[-1] = True
        return mask

    def boundary_ring(self, u: np.ndarray) -> np.ndarray:
        return u[-1:]

    def distance(self, center=None) -> np.ndarray:
        return self.r

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


Grid = BoxGrid | RadialGrid


class Field:
    """Grid values of a nonnegative field; immutable once built."""

    def __init__(self, grid: Grid, values: np.ndarray, check: bool = True):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        if check and np.any(values < 0):
            raise ValueError("fields are nonnegative")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    def with_values(self, values: np.ndarray) -> "Field":
        return type(self)(self.grid, values)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(grid={self.grid!r}, sup={self.values.max():.4g})"

    def boundary_ok(self, tol: float = BOUNDARY_TOL) -> bool:
        """Domain-truncation monitor: boundary ring small relative to the sup."""
        sup = float(self.values.max())
        return bool(sup == 0 or np.max(np.abs(self.grid.boundary_ring(self.values))) <= tol * sup)

    # I/O
    def to_bytes(self) -> bytes:
        """Flat little-endian binary.

        Layout: ``int64 kind`` (0 box, 1 radial), ``int64 n``, ``int64 d`` (stored
        axes), ``d x int64`` dims, ``float64 h``, ``d x float64`` half-widths,
        then the values as C-ordered ``float64``.
        """
        g = self.grid
        kind = 1 if g.radial else 0
        R = (g.R,) if g.radial else g.R
        dims = self.values.shape
        head = struct.pack(f"<3q{len(dims)}qd{len(R)}d", kind, g.n, len(dims), *dims, g.h, *R)
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Field":
        kind, n, d = struct.unpack_from("<3q", data, 0)
        off = 24
        dims = struct.unpack_from(f"<{d}q", data, off)
        off += 8 * d
        (h,) = struct.unpack_from("<d", data, off)
        off += 8
        R = struct.unpack_from(f"<{d}d", data, off)
        off += 8 * d
        vals = np.frombuffer(data, dtype="<f8", offset=off).reshape(dims)
        if kind == 1:
            return RadialField(RadialGrid(n, R[0], h), vals)
        return Field(BoxGrid(n, R, h), vals)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Field":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def slice_csv(self) -> str:
        """CSV of a radial slice (or the x-axis line through the box centre)."""
        g = self.grid
        if g.radial:
            x, v, name = g.r, self.values, "r"
        else:
            mid = tuple(N // 2 for N in g.shape[1:])
            x, v, name = g.axes[0], self.values[(slice(None),) + mid], "x"
        buf = io.StringIO()
        buf.write(f"{name},u\n")
        np.savetxt(buf, np.column_stack([x, v]), delimiter=",", fmt="%.17g")
        return buf.getvalue()


class RadialField(Field):
    """Radially symmetric field on a :class:`RadialGrid`."""

    def __init__(self, grid: RadialGrid, values: np.ndarray, check: bool = True):
        if not isinstance(grid, RadialGrid):
            raise TypeError("RadialField needs a RadialGrid")
        super().__init__(grid, values, check)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r


def make_field(grid: Grid, values: np.ndarray, check: bool = True) -> Field:
    cls = RadialField if grid.radial else Field
    return cls(grid, values, check)


# energies and norms ---------------------------------------------------------

def integrate(u: Field | np.ndarray, grid: Grid | None = None) -> float:
    if isinstance(u, Field):
        grid, u = u.grid, u.values
    return float(np.sum(grid.weights * u))


def inner(u: Field, v: Field) -> float:
    return integrate(u.values * v.values, u.grid)


def energy_density_terms(values: np.ndarray, grid: Grid, nl: Nonlinearity) -> tuple:
    return grid.gradient_energy(values), integrate(nl.F(np.maximum(values, 0.0)), grid)


def energy(u: Field, nl: Nonlinearity) -> float:
    """Discrete ``J(u) = int 1/2 |grad u|^2 + F(u)``."""
    kin, pot = energy_density_terms(u.values, u.grid, nl)
    return kin + pot


@dataclass(frozen=True)
class Norms:
    L2: float
    H1: float
    sup: float
    lap_L2: float

    def __iter__(self):
        return iter((self.L2, self.H1, self.sup))


def norms(u: Field) -> Norms:
    """L2, H1 (central-difference gradient), sup, and the L2 norm of the discrete Laplacian."""
    g, v = u.grid, u.values
    l2 = math.sqrt(max(integrate(v * v, g), 0.0))
    if v.ndim == 1:
        grads = [np.gradient(v, g.h, edge_order=2)]
    else:
        grads = np.gradient(v, g.h, edge_order=2)
    g2 = sum(integrate(d * d, g) for d in grads)
    lap = g.laplacian(v)
    return Norms(l2, math.sqrt(l2**2 + g2), float(np.max(np.abs(v))) if v.size else 0.0,
                 math.sqrt(integrate(lap * lap, g)))


def l2_norm(values: np.ndarray, grid: Grid) -> float:
    return math.sqrt(max(integrate(values * values, grid), 0.0))


# bubbles ------------------------------------------------------------------

def sample_radial(p: RadialProfile, grid: Grid, center=None, derivative: bool = False) -> np.ndarray:
    """``xi(|x - center|)`` (or ``xi'``) sampled on the grid."""
    if grid.radial:
        if center is not None and np.any(np.asarray(center) != 0):
            raise ValueError("radial grids only hold bubbles centred at the origin")
        d = grid.r
    else:
        d = grid.distance(np.zeros(grid.n) if center is None else center)
    vals = p.derivative(d) if derivative else p(d)
    return np.asarray(vals)


def sample_bubble(p: RadialProfile, centers: Sequence, weights: Sequence[float] | None,
                  grid: Grid, clearance: float | None = None) -> Field:
    """``sum_i alpha_i xi(|x - x^i|)`` sampled on the grid.

    Centres must sit at least ``clearance`` (default ``5/m``) inside the box.
    """
    centers = [np.atleast_1d(np.asarray(c, float)) for c in centers]
    weights = [1.0] * len(centers) if weights is None else list(weights)
    if len(weights) != len(centers):
        raise ValueError("one weight per centre")
    if p.n != grid.n:
        raise ValueError("profile and grid dimensions differ")
    clearance = 5.0 * p.length_scale if clearance is None else clearance
    out = grid.zeros()
    for c, a in zip(centers, weights):
        if grid.radial:
            edge = grid.R - float(np.linalg.norm(c))
        else:
            edge = min(R - abs(x) for R, x in zip(grid.R, c))
        if edge < clearance:
            raise ValueError(f"centre {c} closer than {clearance} to the boundary")
        out += a * sample_radial(p, grid, c)
    return make_field(grid, out, check=False)


def discrete_ground_state(p: RadialProfile, grid: RadialGrid, nl: Nonlinearity | None = None,
                          tol: float = 1e-12, max_iter: int = 30) -> RadialField:
    """Newton-polish the sampled profile into a zero of ``-Delta_h u + f(u)``.

    The radial (l = 0) linearisation has no kernel, so Newton converges
    quadratically from the sampled profile. The result is a fixed point of the
    discrete flow, which matters because the ground state is a saddle.
    """
    from scipy.sparse.linalg import spsolve

    if not grid.radial:
        raise ValueError("discrete polishing is implemented on radial grids")
    nl = p.nl if nl is None else nl
    u = sample_radial(p, grid)
    u[-1] = 0.0
    K = grid.stiffness
    V = grid.volumes[:-1]
    scale = max(1.0, float(u.max()))
    for _ in range(max_iter):
        x = u[:-1]
        res = K @ x + V * nl.f(np.maximum(x, 0.0))
        Jac = K + sp.diags(V * nl.df(np.maximum(x, 0.0)))
        delta = spsolve(Jac.tocsc(), res)
        u[:-1] = x - delta
        # the residual itself floors at round-off / h^2; the update does not
        if np.max(np.abs(delta)) <= tol * scale:
            break
    else:
        raise RuntimeError("Newton polishing did not converge")
    return RadialField(grid, np.maximum(u, 0.0))
