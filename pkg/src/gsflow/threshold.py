"""Threshold scaling between vanishing and blow-up, by bisection on ``alpha u0``.

Each probe runs the flow from ``alpha u0`` and is classified by its terminal
event. Orbits near the threshold linger near a ground state before leaving,
so a probe still running at the horizon is retried once with twice the
horizon.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bubbles import best_match
from .field import Field, l2_norm, make_field
from .flow import Event, FlowState, run
from .ground_state import RadialProfile
from .reaction import Nonlinearity

MAX_EXPANSIONS = 10
PLATEAU_RATIO = 0.05
MATCH_TOL = 0.05


class UnclassifiableProbe(RuntimeError):
    def __init__(self, alpha: float, horizon: float):
        super().__init__(f"probe alpha={alpha!r} still running at t={horizon}")
        self.alpha = alpha
        self.horizon = horizon


class BracketError(RuntimeError):
    pass


class NoPlateau(RuntimeError):
    pass


@dataclass
class Probe:
    alpha: float
    event: str
    t_event: float | None
    horizon: float


@dataclass
class ThresholdResult:
    alpha_lo: float
    alpha_hi: float
    classifications: list
    near_threshold_run: FlowState | None = field(default=None, repr=False)
    expansions: int = 0
    log_path: str | None = None

    @property
    def alpha(self) -> float:
        return 0.5 * (self.alpha_lo + self.alpha_hi)

    @property
    def width(self) -> float:
        return self.alpha_hi - self.alpha_lo

    def to_dict(self) -> dict:
        return {
            "alpha_lo": self.alpha_lo,
            "alpha_hi": self.alpha_hi,
            "alpha": self.alpha,
            "width": self.width,
            "expansions": self.expansions,
            "probes": [vars(p) for p in self.classifications],
            "near_threshold_event": (self.near_threshold_run.event.value
                                     if self.near_threshold_run is not None else None),
            "log_path": self.log_path,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def classify(u0: Field, nl: Nonlinearity, alpha: float, T: float, dt: float, **run_kw) -> Probe:
    """Run ``alpha u0`` and return its terminal event, doubling the horizon once."""
    horizon = T
    for _ in range(2):
        s = run(make_field(u0.grid, alpha * u0.values), nl, horizon, dt,
                stop_on_converged=False, keep_plateau=False, **run_kw)
        if s.event in (Event.VANISHED, Event.BLOWN_UP):
            return Probe(alpha, s.event.value, s.event_time, horizon)
        horizon *= 2
    raise UnclassifiableProbe(alpha, horizon / 2)


def bisect_threshold(u0: Field, nl: Nonlinearity, bracket0=(0.5, 2.0), tol_alpha: float = 1e-3,
                     T: float = 20.0, dt: float = 1e-2, *, relative: bool = True,
                     keep_run: bool = True, max_expansions: int = MAX_EXPANSIONS,
                     **run_kw) -> ThresholdResult:
    """Bracket the threshold scaling of ``u0``.

    Parameters
    ----------
    bracket0 : (lo, hi)
        Initial guesses. Endpoints are moved geometrically (factor 2, at most
        ``max_expansions`` moves in total) until ``lo`` vanishes and ``hi``
        blows up.
    tol_alpha : float
        Target bracket width, relative to the midpoint unless ``relative`` is
        False.
    keep_run : bool
        Rerun the final midpoint with snapshots and plateau tracking.
    """
    lo, hi = map(float, bracket0)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    probes = []

    def probe(a):
        pr = classify(u0, nl, a, T, dt, **run_kw)
        probes.append(pr)
        return pr.event

    expansions = 0
    ev_lo, ev_hi = probe(lo), probe(hi)
    while ev_lo != Event.VANISHED.value or ev_hi != Event.BLOWN_UP.value:
        if expansions >= max_expansions:
            raise BracketError(f"no bracket after {expansions} expansions: "
                               f"alpha={lo} {ev_lo}, alpha={hi} {ev_hi}")
        expansions += 1
        if ev_lo != Event.VANISHED.value:
            # lo blew up: it is a valid upper end
            hi, ev_hi = lo, ev_lo
            lo /= 2.0
            ev_lo = probe(lo)
        else:
            lo, ev_lo = hi, ev_hi
            hi *= 2.0
            ev_hi = probe(hi)

    def width_ok():
        w = hi - lo
        return w <= (tol_alpha * 0.5 * (lo + hi) if relative else tol_alpha)

    while not width_ok():
        mid = 0.5 * (lo + hi)
        if probe(mid) == Event.VANISHED.value:
            lo = mid
        else:
            hi = mid
    _check_monotone(probes)
    res = ThresholdResult(lo, hi, probes, expansions=expansions)
    if keep_run:
        mid = 0.5 * (lo + hi)
        res.near_threshold_run = run(make_field(u0.grid, mid * u0.values), nl, 2 * T, dt,
                                     stop_on_converged=False, keep_plateau=True,
                                     snapshot_every=50,
                                     **run_kw)
    return res


def _check_monotone(probes) -> None:
    vanish = [p.alpha for p in probes if p.event == Event.VANISHED.value]
    blow = [p.alpha for p in probes if p.event == Event.BLOWN_UP.value]
    if vanish and blow and max(vanish) >= min(blow):
        raise RuntimeError("classification is not monotone in alpha: "
                           f"vanished at {max(vanish)}, blew up at {min(blow)}")


@dataclass(frozen=True)
class ProfileCheck:
    t_plateau: float
    plateau_ratio: float
    Gamma: float
    u_norm: float
    relative_error: float
    center: list
    center_drift: float
    success: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def find_plateau(s: FlowState, max_ratio: float = PLATEAU_RATIO):
    """``(t, u, ratio)`` of the retained plateau: the interior minimum of ``||u_t|| / ||u||``."""
    if s.plateau is None:
        raise NoPlateau("run kept no plateau snapshot")
    t_p, values, ratio = s.plateau
    if t_p >= s.t:
        raise NoPlateau("ratio still decreasing at the end of the run")
    if not ratio <= max_ratio:
        raise NoPlateau(f"no plateau: min ||u_t||/||u|| = {ratio:.3g} > {max_ratio}")
    return s.plateau


def near_threshold_profile_check(res: ThresholdResult, p: RadialProfile,
                                 tol: float = MATCH_TOL, max_ratio: float = PLATEAU_RATIO) -> ProfileCheck:
    """Fit one bubble to the plateau of the retained near-threshold run."""
    s = res.near_threshold_run
    if s is None:
        raise NoPlateau("no near-threshold run retained")
    t_p, values, ratio = find_plateau(s, max_ratio)
    u = make_field(s.u.grid, values, check=False)
    fit = best_match(u, p, 1)
    norm = l2_norm(values, u.grid)
    drift = 0.0
    if not u.grid.radial and s.snapshots:
        earlier = [snap for snap in s.snapshots if snap[0] < t_p]
        if earlier:
            prev = best_match(make_field(u.grid, earlier[-1][1], check=False), p, 1)
            drift = float(np.linalg.norm(prev.bubble.centers[0] - fit.bubble.centers[0]))
    rel = fit.Gamma / norm if norm > 0 else math.inf
    return ProfileCheck(t_p, ratio, fit.Gamma, norm, rel, fit.bubble.centers[0].tolist(), drift,
                        rel <= tol)
