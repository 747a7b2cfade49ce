"""Quantitative extreme-point separation for finite point sets.

Given distinct points ``x_1..x_M`` the construction returns a point ``y`` of the
set and a unit vector ``e`` with ``(x_i - y) . e >= |x_i - y| / D`` for every
other point. It is built by induction on the number of points: after adding
``x_M`` to a certificate ``(y0, e0, D0)`` with ``K = max(4 D0, 2)``

* if ``|cos angle(x_M - y0, e0)| >= 1/K``, keep ``e0`` and take ``y`` to be
  ``y0`` or ``x_M`` depending on the sign; the constant becomes K;
* otherwise tilt ``e0`` towards ``x_M - y0`` by ``alpha = 2/K``; the new point
  is then only guaranteed the ratio ``1/(2K)``, so the constant becomes 2K.

The certified constant therefore grows by a factor of at most 8 per point.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

VERIFY_RTOL = 1e-12


class DuplicatePoints(ValueError):
    pass


@dataclass(frozen=True)
class SeparationCert:
    """Separation certificate.

    Attributes
    ----------
    y, y_index : the selected point and its index in ``points``.
    e : unit direction.
    D : certified constant from the construction.
    D2 : constant for base points near ``y``, ``2D (1 + 1/(2D))``.
    L : minimum pairwise separation of the input.
    Lprime : radius ``L / (2D)`` of the ball around ``y`` covered by ``D2``.
    ratio : measured ``max_i |x_i - y| / ((x_i - y) . e)``, at most ``D``.
    apriori : worst case ``8^(M-2)`` of the construction.
    """

    points: np.ndarray
    y_index: int
    e: np.ndarray
    D: float
    D2: float
    L: float
    Lprime: float
    ratio: float
    apriori: float
    cases: tuple

    @property
    def y(self) -> np.ndarray:
        return self.points[self.y_index]

    @property
    def M(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "y_index": self.y_index, "y": self.y.tolist(),
                "e": self.e.tolist(), "D": self.D, "D2": self.D2, "L": self.L,
                "Lprime": self.Lprime, "ratio": self.ratio, "apriori": self.apriori,
                "cases": list(self.cases), "ratios": cosines(self.points, self.y_index, self.e).tolist()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def cosines(points: np.ndarray, y_index: int, e: np.ndarray, base=None) -> np.ndarray:
    """``(x_i - b) . e / |x_i - b|`` for every ``i != y_index`` (``b`` defaults to ``y``)."""
    b = points[y_index] if base is None else np.asarray(base, float)
    others = np.delete(points, y_index, axis=0)
    v = others - b
    return (v @ e) / np.linalg.norm(v, axis=1)


def min_separation(points: np.ndarray) -> float:
    diff = points[:, None, :] - points[None, :, :]
    d = np.linalg.norm(diff, axis=-1)
    d[np.diag_indices(len(points))] = np.inf
    return float(d.min())


def _insertion_order(points: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(points - points.mean(axis=0), axis=1)
    return np.argsort(-d, kind="stable")


def separate(P, n: int | None = None) -> SeparationCert:
    """Build a separation certificate for ``M >= 2`` distinct points."""
    pts = np.atleast_2d(np.asarray(P, float))
    if n is not None and pts.shape[1] != n:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {n}")
    M = len(pts)
    if M < 2:
        raise ValueError("need at least two points")
    L = min_separation(pts)
    if L == 0:
        raise DuplicatePoints("points must be pairwise distinct")
    order = _insertion_order(pts)

    a, b = order[0], order[1]
    y = a
    e = (pts[b] - pts[a]) / np.linalg.norm(pts[b] - pts[a])
    D = 1.0
    cases = []
    for new in order[2:]:
        K = max(4.0 * D, 2.0)
        v = pts[new] - pts[y]
        c = float(v @ e) / float(np.linalg.norm(v))
        if abs(c) >= 1.0 / K:
            if c < 0:
                y = new
            D = K
            cases.append(1)
        else:
            e1 = v / np.linalg.norm(v)
            t = e + (2.0 / K) * e1
            e = t / np.linalg.norm(t)
            D = 2.0 * K
            cases.append(2)
    cos = cosines(pts, y, e)
    ratio = float(np.max(1.0 / cos)) if np.all(cos > 0) else math.inf
    D2 = 2.0 * D * (1.0 + 1.0 / (2.0 * D))
    return SeparationCert(pts, int(y), e, D, D2, L, L / (2.0 * D), ratio,
                          8.0 ** max(M - 2, 0), tuple(cases))


def verify(cert: SeparationCert, rtol: float = VERIFY_RTOL) -> bool:
    """Exhaustive check of ``(x_i - y) . e >= |x_i - y| / D``."""
    if abs(np.linalg.norm(cert.e) - 1.0) > 1e-12:
        return False
    cos = cosines(cert.points, cert.y_index, cert.e)
    return bool(np.all(cos >= (1.0 - rtol) / cert.D))


def neighborhood_cert(cert: SeparationCert, z) -> bool:
    """Whether ``(x_i - z) . e >= |x_i - z| / D2`` for every ``x_i != y``.

    Guaranteed when ``|z - y| <= L'``; outside that ball the answer is computed,
    not assumed.
    """
    if not cert.L > 0:
        raise ValueError("certificate has no positive separation recorded")
    cos = cosines(cert.points, cert.y_index, cert.e, base=z)
    return bool(np.all(cos >= (1.0 - VERIFY_RTOL) / cert.D2))


def neighborhood_cert_many(cert: SeparationCert, Z) -> np.ndarray:
    """Vectorised :func:`neighborhood_cert` over the rows of ``Z``."""
    Z = np.atleast_2d(np.asarray(Z, float))
    others = np.delete(cert.points, cert.y_index, axis=0)
    v = others[None, :, :] - Z[:, None, :]
    cos = (v @ cert.e) / np.linalg.norm(v, axis=-1)
    return np.all(cos >= (1.0 - VERIFY_RTOL) / cert.D2, axis=1)


def sample_ball(center, radius: float, count: int, rng) -> np.ndarray:
    c = np.asarray(center, float)
    d = rng.normal(size=(count, c.size))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(count, 1)) ** (1.0 / c.size)
    return c + r * d


def sample_sphere(n: int, count: int, rng) -> np.ndarray:
    d = rng.normal(size=(count, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class OracleResult:
    ratio: float
    y_index: int
    e: np.ndarray


def brute_force_direction(P, samples: int = 10_000, seed: int = 0) -> OracleResult:
    """Best ``(y, e)`` over sampled unit vectors: maximise ``min_i cos angle(x_i - y, e)``."""
    pts = np.atleast_2d(np.asarray(P, float))
    E = sample_sphere(pts.shape[1], samples, np.random.default_rng(seed))
    best = (-math.inf, -1, None)
    for j in range(len(pts)):
        v = np.delete(pts, j, axis=0) - pts[j]
        u = v / np.linalg.norm(v, axis=1, keepdims=True)
        worst = (u @ E.T).min(axis=0)
        k = int(np.argmax(worst))
        if worst[k] > best[0]:
            best = (float(worst[k]), j, E[k])
    ratio = 1.0 / best[0] if best[0] > 0 else math.inf
    return OracleResult(ratio, best[1], best[2])


def is_hull_vertex(points: np.ndarray, index: int) -> bool:
    """Extremality of ``points[index]`` in the plane (collinear sets handled directly)."""
    from scipy.spatial import ConvexHull, QhullError

    pts = np.asarray(points, float)
    if pts.shape[1] != 2:
        raise ValueError("hull cross-check is implemented for n = 2")
    try:
        return index in set(ConvexHull(pts).vertices.tolist())
    except QhullError:
        # collinear: extreme points are the two ends of the segment
        d = pts[1] - pts[0] if len(pts) > 1 else np.array([1.0, 0.0])
        for q in pts[2:]:
            if np.linalg.norm(q - pts[0]) > np.linalg.norm(d):
                d = q - pts[0]
        s = (pts - pts[0]) @ d
        return bool(s[index] == s.min() or s[index] == s.max())
