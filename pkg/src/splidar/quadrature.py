"""Globally adaptive Gauss-Kronrod (7/15) quadrature for smooth 1-D integrands."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

# 15-point Kronrod abscissae on [0, 1] (symmetric), with weights for the
# Kronrod rule and the embedded 7-point Gauss rule.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KWEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod abscissae (1, 3, 5, 7 of _XGK).
_GWEIGHTS = np.zeros(15)
_GWEIGHTS[[1, 3, 5]] = _WG[:3]
_GWEIGHTS[[13, 11, 9]] = _WG[:3]
_GWEIGHTS[7] = _WG[3]


class QuadratureError(RuntimeError):
    """Adaptive subdivision hit its limit before meeting the tolerance."""

    def __init__(self, message, value, error):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 0.0
    rel_tol: float = 1e-9
    max_subdivisions: int = 2000

    def __post_init__(self):
        if self.abs_tol < 0 or self.rel_tol <= 0 or (self.abs_tol == 0 and self.rel_tol == 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error: float
    intervals: int
    converged: bool


def _gk15(f, a, b):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fx = np.asarray(f(center + half * _NODES), dtype=float)
    kron = half * np.dot(_KWEIGHTS, fx)
    gauss = half * np.dot(_GWEIGHTS, fx)
    return kron, abs(kron - gauss)


def integrate(f, a, b, config=QuadratureConfig(), points=()):
    """Integrate a vectorised ``f`` over ``[a, b]``.

    The interval is first split at any ``points`` inside ``(a, b)``; the
    segment with the largest error estimate is then bisected until the total
    error satisfies ``max(abs_tol, rel_tol * |I|)``.

    Returns
    -------
    QuadratureResult
        ``converged`` is False when ``max_subdivisions`` ran out.
    """
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("integration limits must be finite")
    if a == b:
        return QuadratureResult(0.0, 0.0, 0, True)
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0

    cuts = sorted({a, b, *(p for p in points if a < p < b)})
    heap = []
    total = 0.0
    err = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        v, e = _gk15(f, lo, hi)
        total += v
        err += e
        heapq.heappush(heap, (-e, lo, hi, v))

    n = len(heap)
    while err > max(config.abs_tol, config.rel_tol * abs(total)):
        if n >= config.max_subdivisions:
            return QuadratureResult(sign * total, err, n, False)
        neg_e, lo, hi, v = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # interval exhausted at floating-point resolution
            heapq.heappush(heap, (neg_e, lo, hi, v))
            return QuadratureResult(sign * total, err, n, False)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total += v1 + v2 - v
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, lo, mid, v1))
        heapq.heappush(heap, (-e2, mid, hi, v2))
        n += 1
    # re-sum to shed accumulated rounding from the running updates
    total = float(np.sum([item[3] for item in heap]))
    err = float(np.sum([-item[0] for item in heap]))
    return QuadratureResult(sign * total, err, n, True)
