"""Bessel functions of the first kind, their positive zeros, and the fBM constant."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import brentq

__all__ = [
    "BesselZeroTable",
    "BracketError",
    "bessel_j",
    "bessel_zeros",
    "gamma_fn",
    "c_rho",
]

ORDER_MIN, ORDER_MAX = -1.0, 2.0
ZERO_RESIDUAL_TOL = 1e-10


class BracketError(RuntimeError):
    """A Bessel zero could not be bracketed."""

    def __init__(self, order: float, index: int):
        super().__init__(f"could not bracket zero #{index} of J_{order:g}")
        self.order = order
        self.index = index


def _check_order(nu: float) -> None:
    if not ORDER_MIN < nu < ORDER_MAX:
        raise ValueError(f"Bessel order {nu} outside supported range ({ORDER_MIN}, {ORDER_MAX})")


def bessel_j(nu: float, x):
    """Bessel function of the first kind ``J_nu(x)`` for real ``x > 0``.

    Parameters
    ----------
    nu : float
        Order, restricted to ``(-1, 2)``.
    x : float or array_like
        Positive arguments.

    Returns
    -------
    float or ndarray
    """
    _check_order(nu)
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise ValueError("bessel_j requires x > 0")
    out = special.jv(nu, xa)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BesselZeroTable:
    """The first ``len(zeros)`` positive zeros of ``J_order``."""

    order: float
    zeros: np.ndarray

    def __len__(self) -> int:
        return len(self.zeros)

    def residuals(self) -> np.ndarray:
        return np.abs(special.jv(self.order, self.zeros))


def _mcmahon(nu: float, k: np.ndarray) -> np.ndarray:
    beta = (k + nu / 2.0 - 0.25) * np.pi
    mu = 4.0 * nu * nu
    return beta - (mu - 1.0) / (8.0 * beta) - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * (8.0 * beta) ** 3)


def _find_zero(nu: float, lo: float, hi: float) -> float:
    z = brentq(lambda s: special.jv(nu, s), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(z)


def _compute_zeros(nu: float, start: int, stop: int, previous: float) -> list[float]:
    """Zeros with 1-based indices ``start..stop``; ``previous`` is zero ``start - 1`` (or 0)."""
    out: list[float] = []
    k = np.arange(start, stop + 1, dtype=float)
    guesses = _mcmahon(nu, k)
    for idx, g in zip(range(start, stop + 1), guesses):
        lo = previous + 1e-9 * max(previous, 1.0) if previous > 0 else 1e-12
        z = None
        # McMahon is accurate away from the first few zeros; bracket around it.
        if idx >= 4:
            a, b = max(g - 0.5, lo), g + 0.5
            fa, fb = special.jv(nu, a), special.jv(nu, b)
            if fa * fb < 0:
                z = _find_zero(nu, a, b)
        if z is None:
            # Consecutive positive zeros of J_nu, nu > -1, are more than 2 apart;
            # a 0.05 scan cannot skip a sign change.
            a = lo
            fa = special.jv(nu, a)
            step = 0.05
            for _ in range(10_000):
                b = a + step
                fb = special.jv(nu, b)
                if fa == 0.0:
                    z = a
                    break
                if fa * fb < 0:
                    z = _find_zero(nu, a, b)
                    break
                a, fa = b, fb
            if z is None:
                raise BracketError(nu, idx)
        if abs(special.jv(nu, z)) >= ZERO_RESIDUAL_TOL:
            raise BracketError(nu, idx)
        out.append(z)
        previous = z
    return out


_zero_cache: dict[float, np.ndarray] = {}
_zero_lock = threading.Lock()


def bessel_zeros(nu: float, count: int) -> BesselZeroTable:
    """First ``count`` positive zeros of ``J_nu``, strictly increasing.

    Tables grow lazily per order and are shared between callers; a returned
    table is read-only.
    """
    _check_order(nu)
    if count < 1:
        raise ValueError("count must be >= 1")
    key = float(nu)
    with _zero_lock:
        have = _zero_cache.get(key)
        n_have = 0 if have is None else len(have)
        if n_have < count:
            # Grow geometrically so repeated small extensions stay cheap.
            target = max(count, 2 * n_have)
            prev = float(have[-1]) if n_have else 0.0
            new = _compute_zeros(key, n_have + 1, target, prev)
            arr = np.concatenate([have, new]) if n_have else np.asarray(new)
            arr.setflags(write=False)
            _zero_cache[key] = arr
            have = arr
    zeros = have[:count]
    return BesselZeroTable(order=key, zeros=zeros)


def gamma_fn(x: float) -> float:
    """Gamma function for positive real ``x``."""
    if x <= 0:
        raise ValueError("gamma_fn requires x > 0")
    return math.gamma(x)


def c_rho(rho: float) -> float:
    """Normalizing constant ``sqrt(Gamma(1 + 2 rho) sin(pi rho) / pi)`` of the fBM expansion."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    return math.sqrt(gamma_fn(1.0 + 2.0 * rho) * math.sin(math.pi * rho) / math.pi)
