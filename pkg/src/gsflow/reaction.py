"""Power-law reaction terms ``f(t) = a0*t - sum_l a_l * t**p_l``.

The nonlinearity is stored symbolically so that f, its derivatives and the
antiderivative F are exact. Everything downstream (shooting residuals, the
discrete energy, the second variation) relies on that exactness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HYPOTHESIS_TOL = 1e-12


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term ``f(t) = a0*t - sum_l a_l t**p_l`` on ``t >= 0``.

    Parameters
    ----------
    a0 : float
        Coefficient of the linear part, equal to ``f'(0)``. Must be positive.
    terms : sequence of (a_l, p_l)
        Power-law sinks with ``a_l >= 0`` and ``p_l > 1``; at least one
        ``a_l`` must be positive.
    holder_beta : float, optional
        Hoelder exponent of ``f'`` near zero. Defaults to
        ``min(1, min_l(p_l - 1))``.
    """

    a0: float
    terms: tuple[tuple[float, float], ...]
    holder_beta: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        terms = tuple((float(a), float(p)) for a, p in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "a0", float(self.a0))
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not terms:
            raise ValueError("at least one power term is required")
        for a, p in terms:
            if a < 0:
                raise ValueError(f"coefficients must be nonnegative, got {a}")
            if not p > 1:
                raise ValueError(f"exponents must exceed 1, got {p}")
        if not sum(a for a, _ in terms) > 0:
            raise ValueError("sum of the power coefficients must be positive")
        beta = self.holder_beta
        if beta is None:
            beta = min(1.0, min(p - 1.0 for _, p in terms))
        beta = float(beta)
        if not 0 < beta <= 1:
            raise ValueError(f"holder_beta must lie in (0, 1], got {beta}")
        object.__setattr__(self, "holder_beta", beta)

    # convenience constructors / serialization
    @classmethod
    def power(cls, p: float, a: float = 1.0, a0: float = 1.0) -> "Nonlinearity":
        """``f(t) = a0*t - a*t**p``."""
        return cls(a0, ((a, p),))

    @classmethod
    def from_dict(cls, d: dict) -> "Nonlinearity":
        return cls(d["a0"], tuple(tuple(t) for t in d["terms"]), d.get("holder_beta"))

    def to_dict(self) -> dict:
        return {"a0": self.a0, "terms": [list(t) for t in self.terms],
                "holder_beta": self.holder_beta}

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([a for a, _ in self.terms])

    @property
    def exponents(self) -> np.ndarray:
        return np.array([p for _, p in self.terms])

    @property
    def decay_rate(self) -> float:
        """``sqrt(f'(0))``: exponential decay rate of the ground state tail."""
        return math.sqrt(self.a0)

    @property
    def length_scale(self) -> float:
        return 1.0 / self.decay_rate

    # evaluation
    def f(self, t):
        """Reaction term. Accepts scalars or arrays of nonnegative values."""
        t = _nonneg(t)
        out = self.a0 * t
        for a, p in self.terms:
            out = out - a * t ** p
        return out

    def df(self, t):
        """``f'(t)``. ``df(0) == a0`` exactly."""
        t = _nonneg(t)
        out = self.a0 + 0.0 * t
        for a, p in self.terms:
            out = out - a * p * t ** (p - 1)
        return out

    def d2f(self, t):
        """``f''(t)``; diverges at 0 for exponents below 2."""
        t = _nonneg(t)
        out = 0.0 * t
        with np.errstate(divide="ignore"):
            for a, p in self.terms:
                out = out - a * p * (p - 1) * t ** (p - 2)
        return out

    def F(self, t):
        """Exact antiderivative ``F(t) = int_0^t f(s) ds``."""
        t = _nonneg(t)
        out = 0.5 * self.a0 * t * t
        for a, p in self.terms:
            out = out - a * t ** (p + 1) / (p + 1)
        return out

    def explicit_part(self, t):
        """``a0*t - f(t) = sum_l a_l t**p_l``, the part a splitting scheme treats explicitly."""
        t = _nonneg(t)
        out = 0.0 * t
        for a, p in self.terms:
            out = out + a * t ** p
        return out

    # structure
    def positive_zero(self) -> float:
        """Unique positive zero of f (``f > 0`` below it, ``f < 0`` above)."""
        from scipy.optimize import brentq

        hi = 1.0
        while self.f(hi) > 0:
            hi *= 2.0
        if self.f(hi) == 0:
            return hi
        lo = hi / 2
        while self.f(lo) <= 0:
            if self.f(lo) == 0:
                return lo
            lo /= 2
        return brentq(self.f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def concavity_radius(self) -> float:
        """Radius ``delta`` such that f is concave on ``(0, delta)``.

        Every term ``-a t**p`` with ``p > 1`` is concave on ``(0, inf)``, so the
        family is concave on the whole half line.
        """
        return math.inf

    def is_subcritical(self, n: int) -> bool:
        """All exponents below ``n/(n-2)`` (always true for ``n <= 2``)."""
        if n <= 2:
            return True
        crit = n / (n - 2)
        return all(p < crit for _, p in self.terms)

    def __call__(self, t):
        return self.f(t)


def _nonneg(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("the reaction term is defined on [0, inf); got a negative argument")
    return arr if arr.ndim else float(arr)


@dataclass(frozen=True)
class HypothesisReport:
    kpp: bool
    concave_near_zero: bool
    concavity_radius: float
    negative_potential: bool
    subcritical: bool
    kpp_min_margin: float
    min_F: float
    argmin_F: float

    @property
    def all_hold(self) -> bool:
        return self.kpp and self.concave_near_zero and self.negative_potential and self.subcritical


def check_hypotheses(nl: Nonlinearity, n: int, t_max: float = 10.0,
                     samples: int = 10_001, tol: float = HYPOTHESIS_TOL) -> HypothesisReport:
    """Check the structural hypotheses on a sample grid of ``[0, t_max]``.

    * KPP bound ``t f'(0) >= f(t)`` (sampled, must agree with the exact identity
      ``t f'(0) - f(t) = sum a_l t**p_l >= 0``);
    * concavity near 0, certified from ``f'' < 0`` on a grid inside the radius;
    * ``F(s) < 0`` for some ``s`` in ``(0, t_max]``;
    * subcriticality ``p_l < n/(n-2)``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if samples < 2:
        raise ValueError("need at least two samples")
    t = np.linspace(0.0, t_max, samples)
    margin = t * nl.df(0.0) - nl.f(t)
    kpp_min = float(margin.min())

    radius = nl.concavity_radius()
    probe = t[1:] if math.isinf(radius) else t[(t > 0) & (t < radius)]
    concave = bool(probe.size and np.all(nl.d2f(probe) < 0))

    Fv = nl.F(t)
    i = int(np.argmin(Fv))
    return HypothesisReport(
        kpp=kpp_min >= -tol,
        concave_near_zero=concave,
        concavity_radius=radius,
        negative_potential=bool(Fv[i] < 0),
        subcritical=nl.is_subcritical(n),
        kpp_min_margin=kpp_min,
        min_F=float(Fv[i]),
        argmin_F=float(t[i]),
    )


def tail_concavity_expression(nl: Nonlinearity, xs: Sequence[float]) -> float:
    """``F(sum x) - sum F(x_i) - sum_{i<j} f(x_i) x_j``, nonpositive inside the concavity radius."""
    xs = np.asarray(xs, dtype=float)
    total = nl.F(float(xs.sum())) - float(np.sum(nl.F(xs)))
    fx = nl.f(xs)
    # sum_{i<j} f(x_i) x_j = sum_i f(x_i) * (sum of x_j for j > i)
    suffix = np.cumsum(xs[::-1])[::-1]
    later = np.append(suffix[1:], 0.0)
    return float(total - np.dot(fx, later))


def parse_terms(items: Iterable) -> tuple:
    return tuple((float(a), float(p)) for a, p in items)
