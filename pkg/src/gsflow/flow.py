"""Time integration of ``u_t = Delta u - f(u)`` with an energy ledger.

One step of the scheme reads

    (I - dt (Delta_h - a0)) u_{k+1} = u_k + dt * (a0 u_k - f(u_k)),

i.e. diffusion and the linear part of f are implicit and the power-law
sinks explicit. The implicit operator is an M-matrix, so nonnegative data stay
nonnegative up to solver round-off (clamped and logged).

Radial grids factor the tridiagonal system once per ``dt``. Cartesian grids
use conjugate gradients, warm-started from the previous iterate.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .field import Field, RadialGrid, energy, integrate, l2_norm, make_field
from .reaction import Nonlinearity

VANISH_SUP = 1e-8
VANISH_ENERGY = 1e-10
BLOWUP_CAP = 1e6
CG_RTOL = 1e-10
CONVERGED_WINDOW = 50
# solutions decaying to zero have ||u_t|| / ||u|| -> a0; a stationary limit has ratio -> 0
CONVERGED_REL = 1e-3
PLATEAU_SKIP = 0.05


class Event(str, Enum):
    RUNNING = "running"
    VANISHED = "vanished"
    BLOWN_UP = "blown_up"
    CONVERGED = "converged"


class SolverError(RuntimeError):
    pass


@dataclass
class FlowState:
    """Current iterate plus the sampled history of the run.

    ``cum_dissipation[k]`` is ``sum dt ||q||^2`` up to ``t_k`` with ``q`` the
    difference quotient of each step. The scheme dissipates slightly more than
    that: one step lowers J by exactly

        dt ||q||^2 + dt^2/2 (||grad q||^2 + int (2 a0 - f'(zeta)) q^2)

    for some ``zeta`` between the iterates, so the identity holds to first order
    in dt. ``cum_numerical`` accumulates the second term (``zeta`` taken at the
    midpoint). ``cum_dissipation_mixed`` pairs ``q`` with the trapezoidal drift
    ``(G_k + G_{k+1})/2``, ``G = Delta_h u - f(u)``, which is second order.
    """

    t: float
    u: Field
    times: list = field(default_factory=list)
    J: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    cum_dissipation: list = field(default_factory=list)
    cum_dissipation_mixed: list = field(default_factory=list)
    cum_numerical: list = field(default_factory=list)
    sup: list = field(default_factory=list)
    L2: list = field(default_factory=list)
    event: Event = Event.RUNNING
    event_time: float | None = None
    clamp_mass: float = 0.0
    max_clamp_ratio: float = 0.0
    steps: int = 0
    snapshots: list = field(default_factory=list)
    plateau: tuple | None = None
    _drift: np.ndarray | None = field(default=None, repr=False)

    @property
    def J_history(self) -> list:
        return list(zip(self.times, self.J))

    @property
    def dissipation_history(self) -> list:
        return list(zip(self.times, self.dissipation))

    @property
    def dudt_norm(self) -> float:
        return math.sqrt(self.dissipation[-1]) if self.dissipation else math.nan

    def history_arrays(self) -> dict:
        return {k: np.asarray(getattr(self, k)) for k in
                ("times", "J", "dissipation", "cum_dissipation", "cum_dissipation_mixed",
                 "cum_numerical", "sup", "L2")}

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "J", "dissipation", "sup_u", "L2_u", "event"])
        last = len(self.times) - 1
        for k, t in enumerate(self.times):
            ev = self.event.value if k == last else Event.RUNNING.value
            w.writerow([repr(t), repr(self.J[k]), repr(self.dissipation[k]),
                        repr(self.sup[k]), repr(self.L2[k]), ev])
        return buf.getvalue()

    def save_checkpoint(self, stem) -> None:
        """Write ``<stem>.field`` (binary field) and ``<stem>.json`` (scalars)."""
        self.u.save(f"{stem}.field")
        meta = {"t": self.t, "event": self.event.value, "event_time": self.event_time,
                "J": self.J[-1] if self.J else None, "steps": self.steps,
                "clamp_mass": self.clamp_mass}
        with open(f"{stem}.json", "w") as fh:
            json.dump(meta, fh, indent=2)

    @classmethod
    def load_checkpoint(cls, stem) -> "FlowState":
        u = Field.load(f"{stem}.field")
        with open(f"{stem}.json") as fh:
            meta = json.load(fh)
        return cls(t=meta["t"], u=u, event=Event(meta["event"]), event_time=meta["event_time"],
                   steps=meta["steps"], clamp_mass=meta["clamp_mass"])


class Stepper:
    """IMEX stepper bound to one grid, nonlinearity and time step."""

    def __init__(self, grid, nl: Nonlinearity, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        if dt > 0.1 / nl.a0 * (1 + 1e-12):
            raise ValueError(f"dt={dt} exceeds the cap 0.1/a0 = {0.1 / nl.a0}")
        self.grid, self.nl, self.dt = grid, nl, dt
        self._lu = None
        if isinstance(grid, RadialGrid):
            V = grid.volumes[:-1]
            A = sp.diags(V * (1.0 + dt * nl.a0)) + dt * grid.stiffness
            self._lu = splu(A.tocsc())
            self._V = V
        else:
            self._shape = tuple(N - 2 for N in grid.shape)
            size = int(np.prod(self._shape))
            self._op = LinearOperator((size, size), matvec=self._apply, dtype=float)

    def _apply(self, x):
        g = self.grid
        full = np.zeros(g.shape)
        full[g.interior] = x.reshape(self._shape)
        lap = g.laplacian(full)[g.interior]
        return ((1.0 + self.dt * self.nl.a0) * full[g.interior] - self.dt * lap).ravel()

    def advance(self, u: np.ndarray) -> np.ndarray:
        rhs = u + self.dt * self.nl.explicit_part(np.maximum(u, 0.0))
        out = np.zeros_like(u)
        if self._lu is not None:
            out[:-1] = self._lu.solve(self._V * rhs[:-1])
        else:
            g = self.grid
            b = rhs[g.interior].ravel()
            x, info = cg(self._op, b, x0=u[g.interior].ravel(), rtol=CG_RTOL, atol=0.0,
                         maxiter=10_000)
            if info != 0:
                raise SolverError(f"conjugate gradients did not converge (info={info})")
            out[g.interior] = x.reshape(self._shape)
        return out


def _record(s: FlowState, nl: Nonlinearity, rate: float) -> None:
    v = s.u.values
    s.times.append(s.t)
    s.J.append(energy(s.u, nl))
    s.dissipation.append(rate)
    s.sup.append(float(v.max()))
    s.L2.append(l2_norm(v, s.u.grid))


def drift(u: np.ndarray, grid, nl: Nonlinearity) -> np.ndarray:
    """Right-hand side ``Delta_h u - f(u)``, zero on the boundary."""
    out = grid.laplacian(u) - nl.f(np.maximum(u, 0.0))
    out[grid.boundary_mask()] = 0.0
    return out


def initial_state(u0: Field, nl: Nonlinearity) -> FlowState:
    if np.any(u0.values < 0) or not np.all(np.isfinite(u0.values)):
        raise ValueError("initial data must be finite and nonnegative")
    s = FlowState(t=0.0, u=u0)
    _record(s, nl, math.nan)
    s.cum_dissipation.append(0.0)
    s.cum_dissipation_mixed.append(0.0)
    s.cum_numerical.append(0.0)
    return s


def _advance_state(s: FlowState, stepper: Stepper) -> tuple:
    """Advance in place; return ``||q||^2``, ``<q, (G_k + G_{k+1})/2>`` and the
    scheme's excess dissipation divided by dt."""
    g = s.u.grid
    old = s.u.values
    if s._drift is None:
        s._drift = drift(old, g, stepper.nl)
    new = stepper.advance(old)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError(f"non-finite values at t={s.t + stepper.dt}")
    neg = new < 0
    if np.any(neg):
        cm = -integrate(np.where(neg, new, 0.0), g)
        s.clamp_mass += cm
        l1 = integrate(np.abs(new), g)
        s.max_clamp_ratio = max(s.max_clamp_ratio, cm / l1 if l1 > 0 else 0.0)
        new = np.maximum(new, 0.0)
    q = (new - old) / stepper.dt
    rate = integrate(q * q, g)
    G = drift(new, g, stepper.nl)
    mixed = 0.5 * integrate(q * (s._drift + G), g)
    nl = stepper.nl
    zeta = 0.5 * (old + new)
    excess = 0.5 * stepper.dt * (2.0 * g.gradient_energy(q)
                                 + integrate((2.0 * nl.a0 - nl.df(zeta)) * q * q, g))
    s._drift = G
    s.u = make_field(g, new, check=False)
    s.t += stepper.dt
    s.steps += 1
    return rate, mixed, excess


def step(s: FlowState, nl: Nonlinearity, dt: float) -> FlowState:
    """One IMEX step, returning a new state (the input is left untouched)."""
    new = FlowState(t=s.t, u=s.u, times=list(s.times), J=list(s.J),
                    dissipation=list(s.dissipation), cum_dissipation=list(s.cum_dissipation),
                    cum_dissipation_mixed=list(s.cum_dissipation_mixed),
                    cum_numerical=list(s.cum_numerical), sup=list(s.sup),
                    L2=list(s.L2), event=s.event, clamp_mass=s.clamp_mass,
                    max_clamp_ratio=s.max_clamp_ratio, steps=s.steps, _drift=s._drift)
    if not new.times:
        _record(new, nl, math.nan)
        new.cum_dissipation.append(0.0)
        new.cum_dissipation_mixed.append(0.0)
        new.cum_numerical.append(0.0)
    rate, mixed, excess = _advance_state(new, Stepper(s.u.grid, nl, dt))
    _record(new, nl, rate)
    new.cum_dissipation.append(new.cum_dissipation[-1] + dt * rate)
    new.cum_dissipation_mixed.append(new.cum_dissipation_mixed[-1] + dt * mixed)
    new.cum_numerical.append(new.cum_numerical[-1] + dt * excess)
    return new


def run(u0: Field, nl: Nonlinearity, T: float, dt: float, *, sample_every: int = 1,
        snapshot_every: int | None = None, conv_tol: float = 1e-6,
        conv_window: int = CONVERGED_WINDOW, blowup_cap: float = BLOWUP_CAP,
        stop_on_converged: bool = True, keep_plateau: bool = True) -> FlowState:
    """Integrate to ``T`` or until vanishing, blow-up or (optionally) convergence.

    Parameters
    ----------
    sample_every : int
        Steps between history samples. The dissipation integral is accumulated
        every step regardless.
    snapshot_every : int, optional
        Samples between stored copies of ``u``.
    conv_tol, conv_window
        ``converged`` fires once ``||u_t||_L2 <= conv_tol`` for ``conv_window``
        consecutive samples. Samples also need ``||u_t|| <= 1e-3 ||u||`` so that
        solutions decaying to zero end as ``vanished`` instead.
    keep_plateau : bool
        Keep ``(t, u, ||u_t|| / ||u||)`` at the step where that ratio is
        smallest, ignoring the first ``PLATEAU_SKIP`` share of the horizon.
    """
    s = initial_state(u0, nl)
    stepper = Stepper(u0.grid, nl, dt)
    nsteps = int(math.ceil(T / dt - 1e-9))
    cum = cum_mixed = cum_num = 0.0
    calm = 0
    best_ratio = math.inf
    if snapshot_every:
        s.snapshots.append((s.t, s.u.values))
    for k in range(1, nsteps + 1):
        rate, mixed, excess = _advance_state(s, stepper)
        cum += dt * rate
        cum_mixed += dt * mixed
        cum_num += dt * excess
        sup = float(s.u.values.max())
        last = k == nsteps
        blown = sup >= blowup_cap
        if k % sample_every == 0 or last or blown:
            _record(s, nl, rate)
            s.cum_dissipation.append(cum)
            s.cum_dissipation_mixed.append(cum_mixed)
            s.cum_numerical.append(cum_num)
            if snapshot_every and (len(s.times) - 1) % snapshot_every == 0:
                s.snapshots.append((s.t, s.u.values))
            still = math.sqrt(rate)
            calm = calm + 1 if still <= conv_tol and still <= CONVERGED_REL * s.L2[-1] else 0
        if keep_plateau and s.t >= PLATEAU_SKIP * T and not blown:
            norm = l2_norm(s.u.values, s.u.grid)
            ratio = math.sqrt(rate) / norm if norm > 0 else math.inf
            if ratio < best_ratio:
                best_ratio = ratio
                s.plateau = (s.t, s.u.values, ratio)
        if blown:
            s.event, s.event_time = Event.BLOWN_UP, s.t
            break
        if sup <= VANISH_SUP and s.J[-1] <= VANISH_ENERGY and s.times[-1] == s.t:
            s.event, s.event_time = Event.VANISHED, s.t
            break
        if stop_on_converged and calm >= conv_window:
            s.event, s.event_time = Event.CONVERGED, s.t
            break
    return s


def _sample_index(s: FlowState, t: float) -> int:
    times = np.asarray(s.times)
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"time {t} outside the recorded history [{times[0]}, {times[-1]}]")
    return int(np.argmin(np.abs(times - t)))


def dissipation_residual(s: FlowState, window: tuple, eps: float = 1e-300,
                         rule: str = "quotient") -> float:
    """Relative defect of ``J(t1) - J(t2) = int_{t1}^{t2} ||u_t||^2``.

    ``rule="quotient"`` integrates the squared difference quotient (first order
    in dt); ``rule="mixed"`` uses its second-order pairing with the drift;
    ``rule="closed"`` adds the scheme's own excess dissipation to the quotient.
    """
    t1, t2 = window
    if not t1 < t2:
        raise ValueError("window must satisfy t1 < t2")
    if rule not in ("quotient", "mixed", "closed"):
        raise ValueError(f"unknown rule {rule!r}")
    i, j = _sample_index(s, t1), _sample_index(s, t2)
    drop = s.J[i] - s.J[j]
    if rule == "mixed":
        diss = s.cum_dissipation_mixed[j] - s.cum_dissipation_mixed[i]
    else:
        diss = s.cum_dissipation[j] - s.cum_dissipation[i]
        if rule == "closed":
            diss += s.cum_numerical[j] - s.cum_numerical[i]
    return abs(drop - diss) / max(abs(drop), eps)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    t_start: float
    t_end: float
    npoints: int


def exponential_rate_fit(t, y) -> RateFit:
    """Least-squares line through ``(t, log y)``; ``y`` must be positive."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.shape != y.shape or len(t) < 2:
        raise ValueError("need at least two matching (t, y) samples")
    if np.any(y <= 0):
        raise ValueError("values must be positive for a log fit")
    ly = np.log(y)
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(coef[0]), float(coef[1]), r2, float(t[0]), float(t[-1]), len(t))
