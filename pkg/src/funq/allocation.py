"""Bit allocation for product quantizers.

Given nonincreasing weights ``nu_1 >= nu_2 >= ...`` (upper surrogates for the
sup-norms of the expansion functions) and a budget ``N``, the continuous
minimizer of ``sum nu_j / y_j`` subject to ``prod y_j = N`` is
``z_j = N^(1/m) nu_j / G_m`` with ``G_m`` the geometric mean of the first ``m``
weights. Integer levels are ``floor(z_j)``, which is valid while ``z_m >= 1``.
All products of weights are taken in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Allocation",
    "InfeasibleBlockLength",
    "nu_theoretical",
    "continuous_allocation",
    "integer_allocation",
    "max_feasible_m",
    "choose_block_length",
    "allocate",
]

SCAN_CAP = 100_000
# Relative slack absorbing log-space rounding at exact integer boundaries,
# e.g. z_3 = 1 for nu = (1, 1/2, 1/4) and N = 8.
_REL_SLACK = 1e-9


class InfeasibleBlockLength(ValueError):
    """Raised when ``z_m < 1`` so the floor allocation would use a zero level."""

    def __init__(self, m: int, z_m: float):
        super().__init__(f"block length m={m} infeasible: z_m = {z_m:.6g} < 1")
        self.m = m
        self.z_m = z_m


@dataclass(frozen=True)
class Allocation:
    budget: int
    block_length: int
    levels: tuple[int, ...]
    weights: np.ndarray = field(repr=False)
    continuous: np.ndarray = field(repr=False)

    @property
    def product(self) -> int:
        return math.prod(self.levels)


def nu_theoretical(theta: float, gamma: float, m: int) -> np.ndarray:
    """Decreasing weights ``j^-theta log(1+j)^gamma``, flattened before ``j0 = [e^(gamma/theta)]``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    j0 = int(math.floor(math.exp(gamma / theta)))
    j = np.arange(1, m + 1, dtype=float)
    jj = np.maximum(j, j0)
    return jj ** (-theta) * np.log1p(jj) ** gamma


def _as_weights(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 1 or len(nu) == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(~np.isfinite(nu)) or np.any(nu <= 0):
        raise ValueError("weights must be positive and finite")
    return nu


def _log_z(nu: np.ndarray, m: int, budget: float) -> np.ndarray:
    logs = np.log(nu[:m])
    return math.log(budget) / m + logs - np.sum(logs) / m


def continuous_allocation(nu, m: int, budget: float) -> np.ndarray:
    """Continuous optimum ``z_j = N^(1/m) nu_j (prod_k nu_k)^(-1/m)``, ``j <= m``."""
    nu = _as_weights(nu)
    if not 1 <= m <= len(nu):
        raise ValueError(f"m={m} must lie in 1..{len(nu)}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    return np.exp(_log_z(nu, m, budget))


def integer_allocation(nu, m: int, budget: int) -> Allocation:
    """Levels ``N_j = floor(z_j)``; raises :class:`InfeasibleBlockLength` if ``z_m < 1``."""
    nu = _as_weights(nu)
    z = continuous_allocation(nu, m, budget)
    if z[-1] < 1.0 - _REL_SLACK:
        raise InfeasibleBlockLength(m, float(z[-1]))
    levels = np.floor(z * (1.0 + _REL_SLACK)).astype(np.int64)
    if math.prod(int(v) for v in levels) > budget:
        levels = np.floor(z).astype(np.int64)
    levels = np.maximum(levels, 1)
    return Allocation(
        budget=int(budget),
        block_length=m,
        levels=tuple(int(v) for v in levels),
        weights=nu[:m].copy(),
        continuous=z,
    )


def max_feasible_m(nu, budget: float, cap: int = SCAN_CAP) -> tuple[int, bool]:
    """Largest ``m`` with ``z_m >= 1`` and whether the scan hit its cap.

    For nonincreasing weights ``z_m >= 1`` is equivalent to
    ``sum_{j<=m} log(nu_j / nu_m) <= log N``, whose left side is
    nondecreasing in ``m``, so the feasible set is ``{1, ..., m*}``.
    The scan cap is ``min(cap, len(nu))``.
    """
    nu = _as_weights(nu)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    limit = min(cap, len(nu))
    logs = np.log(nu[:limit]) - np.log(nu[0])
    csum = np.cumsum(logs)
    m = np.arange(1, limit + 1)
    lhs = csum - m * logs  # sum_{j<=m} log(nu_j / nu_m)
    ok = lhs <= math.log(budget) + _REL_SLACK * max(1.0, math.log(budget))
    # Contiguity holds for monotone weights; guard anyway.
    bad = np.flatnonzero(~ok)
    m_star = int(bad[0]) if bad.size else limit
    m_star = max(m_star, 1)
    return m_star, bool(bad.size == 0)


def block_length_cap(budget: float) -> int:
    """``max(1, floor(2 ln N / ln ln N))`` for ``N >= 3``; 1 below."""
    if budget < 3:
        return 1
    return max(1, int(math.floor(2.0 * math.log(budget) / math.log(math.log(budget)))))


def choose_block_length(budget: float, nu) -> int:
    """``min(m*(N), floor(2 ln N / ln ln N))``, always a feasible block length."""
    if budget < 3:
        return 1
    m_star, _ = max_feasible_m(nu, budget)
    return min(m_star, block_length_cap(budget))


def allocate(nu, budget: int, m: int | None = None) -> Allocation:
    """Block length (automatic unless given) and integer levels for a budget."""
    if m is None:
        m = choose_block_length(budget, nu)
    return integer_allocation(nu, m, budget)
