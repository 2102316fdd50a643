"""Admissible series expansions ``X = sum_j xi_j f_j`` of Gaussian processes.

Supported families
------------------
``bm``           Brownian motion, ``f_j(t) = sqrt(2/T) sin(c_j t) / c_j``,
                 ``c_j = pi (j - 1/2) / T``.
``fbm``          Fractional Brownian motion, Dzhaparidze-van Zanten sine /
                 one-minus-cosine expansion over Bessel zeros, interleaved as
                 ``f_{2j-1} = (1 - cos)`` family, ``f_{2j} = sin`` family.
``fbs``          Fractional Brownian sheet on ``[0, T]^d``: tensor products of
                 the ``fbm`` functions ordered by decreasing ``prod j_i^-theta_i``.
``rl``           Riemann-Liouville process, moving-average expansion with
                 kernel ``s^(rho - 1/2)`` evaluated by quadrature.
``ou``           Stationary Ornstein-Uhlenbeck process; index 1 carries the
                 initial-value function ``sigma / sqrt(2 beta) e^(-beta t)``.
``weierstrass``  ``f_j(t) = j^-theta sin(j^(b + theta) t)``.

Every sequence exposes point evaluation ``seq(j, t)`` and a cached,
read-only ``count x nodes`` value matrix on a :class:`Grid`.
"""

from __future__ import annotations

import functools
import itertools
import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate, special

from . import specfun

__all__ = [
    "FAMILIES",
    "Decay",
    "Grid",
    "GridPath",
    "ProcessSpec",
    "AdmissibleSequence",
    "default_grid",
    "dvz_fbm_sequence",
    "tensor_arrangement",
    "fbs_sequence",
    "moving_average_sequence",
    "bm_sequence",
    "rl_sequence",
    "ou_sequence",
    "weierstrass_sequence",
    "sequence_for",
    "partial_covariance",
    "partial_covariance_matrix",
    "analytic_covariance",
    "sup_norm_table",
    "holder_quotients",
]

FAMILIES = ("bm", "fbm", "fbs", "ou", "rl", "weierstrass")
DEFAULT_G = {1: 1025, 2: 513, 3: 65}
MAX_FBS_DIM = 3
# Guard on cached matrix size (float64 entries).
MAX_MATRIX_ENTRIES = 2**28


# -- grids -------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid with ``G`` nodes per axis on ``[0, T]^d``.

    Nodes are ordered in C order over the axes (last axis fastest).
    """

    T: float = 1.0
    G: int = 1025
    d: int = 1

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("grid horizon T must be positive")
        if self.G < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        if self.d < 1:
            raise ValueError("grid dimension must be >= 1")

    @cached_property
    def axis(self) -> np.ndarray:
        a = np.linspace(0.0, self.T, self.G)
        a.setflags(write=False)
        return a

    @property
    def size(self) -> int:
        return self.G**self.d

    @cached_property
    def nodes(self) -> np.ndarray:
        """``(size, d)`` array of node coordinates."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights; they sum to ``T^d``."""
        h = self.T / (self.G - 1)
        w1 = np.full(self.G, h)
        w1[0] = w1[-1] = 0.5 * h
        w = w1
        for _ in range(self.d - 1):
            w = np.multiply.outer(w, w1).ravel()
        w.setflags(write=False)
        return w

    def to_dict(self) -> dict:
        return {"T": self.T, "G": self.G, "d": self.d}


def default_grid(T: float = 1.0, d: int = 1, G: int | None = None) -> Grid:
    return Grid(T=T, G=G or DEFAULT_G.get(d, 33), d=d)


@dataclass(frozen=True)
class GridPath:
    """Path values at the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.size,):
            raise ValueError("values length must equal the grid node count")

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_norm(self) -> float:
        return float(np.sqrt(np.dot(self.grid.weights, np.square(self.values))))


# -- process specs -------------------------------------------------------------

@dataclass(frozen=True)
class Decay:
    """Decay metadata: ``||f_j|| <~ j^-theta log(1+j)^gamma``, ``[f_j]_a <~ j^b``."""

    theta: float
    gamma: float
    a: float
    b: float


@dataclass(frozen=True)
class ProcessSpec:
    """A Gaussian process family with its parameters and horizon ``T``.

    Only the parameters relevant to ``family`` may be set:
    ``fbm``: ``hurst``; ``fbs``: ``hurst`` (tuple, one per axis);
    ``ou``: ``beta``, ``sigma``; ``rl``: ``rho``; ``weierstrass``: ``theta``, ``b``.
    """

    family: str
    T: float = 1.0
    hurst: float | tuple[float, ...] | None = None
    beta: float | None = None
    sigma: float | None = None
    rho: float | None = None
    theta: float | None = None
    b: float | None = None

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}; expected one of {FAMILIES}")
        if not (isinstance(self.T, (int, float)) and self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be a positive finite number")
        if fam == "fbm":
            if not isinstance(self.hurst, (int, float)) or not 0 < self.hurst < 1:
                raise ValueError("hurst must lie in (0, 1)")
        elif fam == "fbs":
            h = self.hurst
            if not isinstance(h, tuple) or not 1 <= len(h) <= MAX_FBS_DIM:
                raise ValueError(f"fbs hurst must be a tuple of 1..{MAX_FBS_DIM} values")
            if any(not 0 < v < 1 for v in h):
                raise ValueError("each hurst index must lie in (0, 1)")
        elif fam == "ou":
            if self.beta is None or self.beta <= 0:
                raise ValueError("beta must be positive")
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("sigma must be positive")
        elif fam == "rl":
            if self.rho is None or not 0 < self.rho <= 1.5:
                raise ValueError("rho must lie in (0, 3/2]")
        elif fam == "weierstrass":
            if self.theta is None or self.theta <= 0.5:
                raise ValueError("theta must exceed 1/2")
            if self.b is None:
                raise ValueError("b is required")

    @property
    def dimension(self) -> int:
        return len(self.hurst) if self.family == "fbs" else 1


# -- sequences -----------------------------------------------------------------

class AdmissibleSequence:
    """First ``count`` functions of an admissible expansion.

    Subclasses implement :meth:`_eval` (1-based index, points) and optionally
    a faster :meth:`_grid_rows`.
    """

    def __init__(self, spec: ProcessSpec, count: int, decay: Decay):
        if count < 1:
            raise ValueError("count must be >= 1")
        self.spec = spec
        self.count = int(count)
        self.decay = decay
        self._cache: dict[Grid, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def T(self) -> float:
        return self.spec.T

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def __len__(self) -> int:
        return self.count

    def _check_index(self, j: int) -> None:
        if not 1 <= j <= self.count:
            raise IndexError(f"index {j} outside 1..{self.count}")

    def __call__(self, j: int, t) -> np.ndarray:
        """Evaluate ``f_j`` at points ``t`` (shape ``(...,)`` for d=1, ``(..., d)`` otherwise)."""
        self._check_index(j)
        return self._eval(j, np.asarray(t, dtype=float))

    def _eval(self, j: int, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grid_rows(self, grid: Grid, count: int) -> np.ndarray:
        pts = grid.axis if grid.d == 1 else grid.nodes
        return np.stack([self._eval(j, pts) for j in range(1, count + 1)])

    def matrix(self, grid: Grid, count: int | None = None) -> np.ndarray:
        """Read-only ``(count, grid.size)`` matrix of ``f_j`` at the grid nodes."""
        count = self.count if count is None else count
        if not 1 <= count <= self.count:
            raise ValueError(f"count must lie in 1..{self.count}")
        if grid.d != self.dimension:
            raise ValueError("grid dimension does not match the process")
        if not math.isclose(grid.T, self.T):
            raise ValueError("grid horizon does not match the process")
        with self._lock:
            cached = self._cache.get(grid)
            if cached is None or cached.shape[0] < count:
                if count * grid.size > MAX_MATRIX_ENTRIES:
                    raise MemoryError(
                        f"{count} x {grid.size} value matrix exceeds {MAX_MATRIX_ENTRIES} entries; "
                        "use a coarser grid or a smaller depth"
                    )
                cached = np.ascontiguousarray(self._grid_rows(grid, count), dtype=float)
                cached.setflags(write=False)
                self._cache[grid] = cached
        return cached[:count]


class DvZSequence(AdmissibleSequence):
    """Dzhaparidze-van Zanten expansion of fractional Brownian motion."""

    def __init__(self, spec: ProcessSpec, count: int):
        rho = float(spec.hurst)
        super().__init__(spec, count, Decay(theta=rho + 0.5, gamma=0.0, a=1.0, b=0.5 - rho))
        self.rho = rho
        n_sin = max(count // 2, 1)
        n_cos = (count + 1) // 2
        x = specfun.bessel_zeros(-rho, n_sin).zeros
        y = specfun.bessel_zeros(1.0 - rho, n_cos).zeros
        scale = spec.T**rho * specfun.c_rho(rho) * math.sqrt(2.0)
        self.sin_freq = x
        self.cos_freq = y
        self.sin_amp = scale / (np.abs(specfun.bessel_j(1.0 - rho, x)) * x ** (rho + 1.0))
        self.cos_amp = scale / (np.abs(specfun.bessel_j(-rho, y)) * y ** (rho + 1.0))

    def _eval(self, j, t):
        i = (j + 1) // 2 - 1
        if j % 2 == 1:
            return self.cos_amp[i] * (1.0 - np.cos(self.cos_freq[i] * t / self.T))
        return self.sin_amp[i] * np.sin(self.sin_freq[i] * t / self.T)

    def _grid_rows(self, grid, count):
        t = grid.axis / self.T
        out = np.empty((count, grid.G))
        n_cos = (count + 1) // 2
        n_sin = count // 2
        out[0::2] = self.cos_amp[:n_cos, None] * (1.0 - np.cos(np.outer(self.cos_freq[:n_cos], t)))
        if n_sin:
            out[1::2] = self.sin_amp[:n_sin, None] * np.sin(np.outer(self.sin_freq[:n_sin], t))
        return out


def dvz_fbm_sequence(rho: float, T: float = 1.0, count: int = 4096) -> DvZSequence:
    return DvZSequence(ProcessSpec("fbm", T=T, hurst=float(rho)), count)


def _geq_with_tol(a: float, b: float) -> bool:
    return a >= b - 1e-12 * max(1.0, abs(b))


def tensor_arrangement(thetas, count: int) -> list[tuple[int, ...]]:
    """First ``count`` multi-indices ordered by decreasing ``prod_i j_i^-theta_i``.

    Equal products (to 1e-12 relative in log space) are ordered
    lexicographically.
    """
    thetas = [float(v) for v in thetas]
    d = len(thetas)
    if d < 1 or count < 1:
        raise ValueError("need at least one axis and count >= 1")
    if d == 1:
        return [(j,) for j in range(1, count + 1)]
    tmin = min(thetas)
    level = thetas[0] * math.log(max(count, 2))  # log-budget: sum theta_i log j_i <= level

    while True:
        cands: list[tuple[float, tuple[int, ...]]] = []

        def rec(prefix: tuple[int, ...], acc: float) -> None:
            i = len(prefix)
            if i == d:
                cands.append((acc, prefix))
                return
            j = 1
            while True:
                s = acc + thetas[i] * math.log(j)
                if s > level + 1e-12:
                    break
                rec(prefix + (j,), s)
                j += 1

        rec((), 0.0)
        cands.sort()
        if len(cands) >= count and cands[count - 1][0] < level - 1e-9:
            break
        level += tmin * math.log(2.0)

    # Group numerically equal products; lexicographic order inside each group.
    out: list[tuple[int, ...]] = []
    i = 0
    while i < len(cands) and len(out) < count:
        k = i + 1
        while k < len(cands) and cands[k][0] - cands[i][0] <= 1e-12 * max(1.0, abs(cands[i][0])):
            k += 1
        group = sorted(c[1] for c in cands[i:k])
        out.extend(group)
        i = k
    return out[:count]


class TensorSequence(AdmissibleSequence):
    """Tensor products of one-dimensional expansions in decreasing-weight order."""

    def __init__(self, spec: ProcessSpec, count: int, axes: list[AdmissibleSequence], order):
        thetas = [ax.decay.theta for ax in axes]
        theta = min(thetas)
        mult = sum(1 for v in thetas if math.isclose(v, theta))
        decay = Decay(
            theta=theta,
            gamma=theta * (mult - 1),
            a=min(ax.decay.a for ax in axes),
            b=max(0.0, max(ax.decay.b for ax in axes)),
        )
        super().__init__(spec, count, decay)
        self.axes = axes
        self.order = list(order)

    def _eval(self, k, t):
        idx = self.order[k - 1]
        out = np.ones(t.shape[:-1])
        for i, (ax, j) in enumerate(zip(self.axes, idx)):
            out = out * ax._eval(j, t[..., i])
        return out

    def _grid_rows(self, grid, count):
        axis_grid = Grid(T=grid.T, G=grid.G, d=1)
        mats = [ax.matrix(axis_grid) for ax in self.axes]
        out = np.empty((count, grid.size))
        for k in range(count):
            idx = self.order[k]
            row = mats[0][idx[0] - 1]
            for mat, j in zip(mats[1:], idx[1:]):
                row = np.multiply.outer(row, mat[j - 1]).ravel()
            out[k] = row
        return out


def fbs_sequence(hurst, T: float = 1.0, count: int = 4096) -> TensorSequence:
    hurst = tuple(float(v) for v in hurst)
    if len(hurst) > MAX_FBS_DIM:
        raise ValueError(f"fractional Brownian sheet supports d <= {MAX_FBS_DIM}")
    spec = ProcessSpec("fbs", T=T, hurst=hurst)
    thetas = [h + 0.5 for h in hurst]
    order = tensor_arrangement(thetas, count)
    per_axis = [max(idx[i] for idx in order) for i in range(len(hurst))]
    axes = [dvz_fbm_sequence(h, T, n) for h, n in zip(hurst, per_axis)]
    return TensorSequence(spec, count, axes, order)


# moving averages ---------------------------------------------------------------

_PANEL_NODES = 16


@functools.lru_cache(maxsize=None)
def _gauss_rule(alpha: float):
    if alpha == 0.0:
        y, w = np.polynomial.legendre.leggauss(_PANEL_NODES)
    else:
        y, w = special.roots_jacobi(_PANEL_NODES, 0.0, alpha)
    return y, w


class MovingAverageSequence(AdmissibleSequence):
    """``f_j(t) = sqrt(2/T) int_0^t psi(s) cos(c_j (t - s)) ds``, ``c_j = pi (j - 1/2) / T``.

    ``psi(s) = s^alpha g(s)`` with ``g`` smooth; the panel touching 0 uses a
    Gauss-Jacobi rule for the weight ``s^alpha``, other panels Gauss-Legendre.
    Panels are at most a quarter period of the cosine factor wide.
    """

    def __init__(self, spec: ProcessSpec, count: int, psi: Callable, decay: Decay, alpha: float = 0.0):
        super().__init__(spec, count, decay)
        self.psi = psi
        self.alpha = float(alpha)

    def freq(self, j) -> np.ndarray:
        return np.pi * (np.asarray(j, dtype=float) - 0.5) / self.T

    def _smooth(self, s):
        # psi / s^alpha on (0, T]
        return self.psi(s) / s**self.alpha if self.alpha != 0.0 else self.psi(s)

    def _quarter(self, j) -> float:
        return self.T / (2.0 * (j - 0.5))

    def _integrals(self, c: float, a: np.ndarray, b: np.ndarray, first: np.ndarray):
        """Per-panel integrals of ``psi(s) cos(c s)`` and ``psi(s) sin(c s)`` on ``[a, b]``."""
        y, w = _gauss_rule(0.0)
        half = 0.5 * (b - a)
        s = a[:, None] + half[:, None] * (1.0 + y)
        ps = self.psi(s)
        cint = half * np.sum(w * ps * np.cos(c * s), axis=1)
        sint = half * np.sum(w * ps * np.sin(c * s), axis=1)
        if self.alpha != 0.0 and np.any(first):
            yj, wj = _gauss_rule(self.alpha)
            k = np.flatnonzero(first)
            hk = half[k]
            s0 = a[k, None] + hk[:, None] * (1.0 + yj)
            g = self._smooth(s0)
            scale = hk ** (1.0 + self.alpha)
            cint[k] = scale * np.sum(wj * g * np.cos(c * s0), axis=1)
            sint[k] = scale * np.sum(wj * g * np.sin(c * s0), axis=1)
        return cint, sint

    def _eval(self, j, t):
        c = float(self.freq(j))
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(t)
        out = np.empty(t.shape)
        flat = t.ravel()
        res = out.reshape(-1)
        q = self._quarter(j)
        for idx, tt in enumerate(flat):
            if tt <= 0.0:
                res[idx] = 0.0
                continue
            n = max(1, math.ceil(tt / q))
            edges = np.linspace(0.0, tt, n + 1)
            first = np.zeros(n, dtype=bool)
            first[0] = True
            ci, si = self._integrals(c, edges[:-1], edges[1:], first)
            cs, ss = math.fsum(ci), math.fsum(si)
            res[idx] = math.sqrt(2.0 / self.T) * (math.cos(c * tt) * cs + math.sin(c * tt) * ss)
        return out[0] if scalar else out

    def _grid_rows(self, grid, count):
        t = grid.axis
        h = t[1] - t[0]
        out = np.empty((count, grid.G))
        for j in range(1, count + 1):
            c = float(self.freq(j))
            p = max(1, math.ceil(h / self._quarter(j)))
            sub = np.linspace(0.0, 1.0, p + 1)
            a = (t[:-1, None] + h * sub[None, :-1]).ravel()
            b = (t[:-1, None] + h * sub[None, 1:]).ravel()
            b[p - 1 :: p] = t[1:]
            first = np.zeros(a.shape, dtype=bool)
            first[0] = True
            ci, si = self._integrals(c, a, b, first)
            cum_c = np.concatenate([[0.0], np.cumsum(ci.reshape(-1, p).sum(axis=1))])
            cum_s = np.concatenate([[0.0], np.cumsum(si.reshape(-1, p).sum(axis=1))])
            out[j - 1] = math.sqrt(2.0 / self.T) * (np.cos(c * t) * cum_c + np.sin(c * t) * cum_s)
        return out


class BMSequence(MovingAverageSequence):
    """Brownian motion: ``psi = 1`` in closed form."""

    def __init__(self, spec: ProcessSpec, count: int):
        super().__init__(spec, count, psi=np.ones_like, decay=Decay(1.0, 0.0, 1.0, 0.0))

    def _eval(self, j, t):
        c = self.freq(j)
        return math.sqrt(2.0 / self.T) * np.sin(c * t) / c

    def _grid_rows(self, grid, count):
        c = self.freq(np.arange(1, count + 1))
        return math.sqrt(2.0 / self.T) * np.sin(np.outer(c, grid.axis)) / c[:, None]


class OUSequence(MovingAverageSequence):
    """Stationary Ornstein-Uhlenbeck process.

    Index 1 is ``sigma / sqrt(2 beta) e^(-beta t)``; index ``j + 1`` is the
    moving-average function ``f_j`` for ``psi(s) = sigma e^(-beta s)``.
    """

    def __init__(self, spec: ProcessSpec, count: int):
        beta, sigma = spec.beta, spec.sigma
        super().__init__(
            spec, count, psi=lambda s: sigma * np.exp(-beta * s), decay=Decay(1.0, 0.0, 1.0, 1.0)
        )
        self.beta = beta
        self.sigma = sigma

    def _closed(self, jj: np.ndarray, t: np.ndarray) -> np.ndarray:
        b = self.beta
        c = self.freq(jj)[:, None]
        num = b * np.cos(c * t) + c * np.sin(c * t) - b * np.exp(-b * t)
        return self.sigma * math.sqrt(2.0 / self.T) * num / (b * b + c * c)

    def _eval(self, j, t):
        if j == 1:
            return self.sigma / math.sqrt(2.0 * self.beta) * np.exp(-self.beta * t)
        return self._closed(np.array([j - 1]), np.atleast_1d(t)).reshape(np.shape(t))

    def quadrature_eval(self, j: int, t) -> np.ndarray:
        """Same as ``seq(j, t)`` for ``j >= 2`` but by panel quadrature."""
        self._check_index(j)
        return MovingAverageSequence._eval(self, j - 1, np.asarray(t, dtype=float))

    def _grid_rows(self, grid, count):
        t = grid.axis
        out = np.empty((count, grid.G))
        out[0] = self.sigma / math.sqrt(2.0 * self.beta) * np.exp(-self.beta * t)
        if count > 1:
            out[1:] = self._closed(np.arange(1, count), t)
        return out


def moving_average_sequence(psi: Callable, T: float = 1.0, count: int = 4096, *, alpha: float = 0.0,
                            spec: ProcessSpec | None = None, decay: Decay | None = None) -> MovingAverageSequence:
    """Moving-average expansion for kernel ``psi`` (``psi(s) ~ s^alpha`` near 0), by quadrature.

    ``spec`` labels the process (it selects the analytic covariance); it
    defaults to the Riemann-Liouville process of order ``alpha + 1/2``.
    """
    if spec is None:
        spec = ProcessSpec("rl", T=T, rho=alpha + 0.5)
    decay = decay or Decay(theta=1.0, gamma=0.0, a=0.5, b=1.0)
    return MovingAverageSequence(spec, count, psi, decay, alpha=alpha)


def bm_sequence(T: float = 1.0, count: int = 4096) -> BMSequence:
    return BMSequence(ProcessSpec("bm", T=T), count)


def rl_sequence(rho: float, T: float = 1.0, count: int = 4096) -> MovingAverageSequence:
    spec = ProcessSpec("rl", T=T, rho=float(rho))
    alpha = rho - 0.5
    decay = Decay(theta=rho + 0.5, gamma=0.0, a=min(1.0, rho + 0.5), b=1.0)
    return MovingAverageSequence(spec, count, lambda s: s**alpha, decay, alpha=alpha)


def ou_sequence(beta: float, sigma: float, T: float = 1.0, count: int = 4096) -> OUSequence:
    return OUSequence(ProcessSpec("ou", T=T, beta=float(beta), sigma=float(sigma)), count)


class WeierstrassSequence(AdmissibleSequence):
    def __init__(self, spec: ProcessSpec, count: int):
        theta, b = spec.theta, spec.b
        super().__init__(spec, count, Decay(theta=max(theta, -b), gamma=0.0, a=1.0, b=b))
        self.theta = theta
        self.b = b

    def _eval(self, j, t):
        return j ** (-self.theta) * np.sin(j ** (self.b + self.theta) * t)

    def _grid_rows(self, grid, count):
        j = np.arange(1, count + 1, dtype=float)
        return (j ** (-self.theta))[:, None] * np.sin(np.outer(j ** (self.b + self.theta), grid.axis))


def weierstrass_sequence(theta: float, b: float, T: float = 1.0, count: int = 4096) -> WeierstrassSequence:
    return WeierstrassSequence(ProcessSpec("weierstrass", T=T, theta=float(theta), b=float(b)), count)


def sequence_for(spec: ProcessSpec, count: int) -> AdmissibleSequence:
    """Default admissible sequence for a process spec."""
    fam = spec.family
    if fam == "bm":
        return BMSequence(spec, count)
    if fam == "fbm":
        return DvZSequence(spec, count)
    if fam == "fbs":
        return fbs_sequence(spec.hurst, spec.T, count)
    if fam == "ou":
        return OUSequence(spec, count)
    if fam == "rl":
        return rl_sequence(spec.rho, spec.T, count)
    return WeierstrassSequence(spec, count)


# -- covariances ------------------------------------------------------------------

def partial_covariance(seq: AdmissibleSequence, K: int, s, t) -> float:
    """``sum_{j <= K} f_j(s) f_j(t)``."""
    if not 1 <= K <= seq.count:
        raise ValueError(f"K must lie in 1..{seq.count}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    terms = [float(seq(j, s) * seq(j, t)) for j in range(1, K + 1)]
    return math.fsum(terms)


def partial_covariance_matrix(seq: AdmissibleSequence, K: int, grid: Grid) -> np.ndarray:
    """``(nodes, nodes)`` matrix of ``sum_{j <= K} f_j(s) f_j(t)`` over grid nodes."""
    F = seq.matrix(grid, K)
    return F.T @ F


def _fbm_kernel(h, s, t):
    return 0.5 * (np.abs(s) ** (2 * h) + np.abs(t) ** (2 * h) - np.abs(s - t) ** (2 * h))


def _rl_kernel(rho: float, s: float, t: float) -> float:
    a = rho - 0.5
    lo, hi = min(s, t), max(s, t)
    if lo <= 0.0:
        return 0.0
    if hi == lo:
        return lo ** (2 * rho) / (2 * rho)
    # int_0^lo (lo - u)^a (hi - u)^a du with the (lo - u)^a endpoint weight
    val, _ = integrate.quad(lambda u: (hi - u) ** a, 0.0, lo, weight="alg", wvar=(0.0, a),
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def analytic_covariance(spec: ProcessSpec, s, t, tol: float = 1e-8, max_terms: int = 20_000_000) -> float:
    """Closed-form covariance ``E X_s X_t`` of the process family."""
    fam = spec.family
    if fam == "bm":
        return float(min(float(s), float(t)))
    if fam == "fbm":
        return float(_fbm_kernel(spec.hurst, float(s), float(t)))
    if fam == "fbs":
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return float(np.prod([_fbm_kernel(h, s[i], t[i]) for i, h in enumerate(spec.hurst)]))
    if fam == "ou":
        return float(spec.sigma**2 / (2 * spec.beta) * math.exp(-spec.beta * abs(float(s) - float(t))))
    if fam == "rl":
        return float(_rl_kernel(spec.rho, float(s), float(t)))
    # Weierstrass: truncate where the tail bound sum_{j>J} j^-2theta drops below tol.
    th = spec.theta
    J = math.ceil((tol * (2 * th - 1)) ** (1.0 / (1.0 - 2 * th)))
    if J > max_terms:
        raise ValueError(
            f"Weierstrass covariance series needs {J} terms for tol={tol:g}; cap is {max_terms}"
        )
    total = 0.0
    for start in range(1, J + 1, 1_000_000):
        j = np.arange(start, min(J, start + 999_999) + 1, dtype=float)
        w = j ** (spec.b + th)
        total += float(np.sum(j ** (-2 * th) * np.sin(w * float(s)) * np.sin(w * float(t))))
    return total


def analytic_covariance_matrix(spec: ProcessSpec, grid: Grid) -> np.ndarray:
    fam = spec.family
    x = grid.nodes
    if fam == "bm":
        s = x[:, 0]
        return np.minimum.outer(s, s)
    if fam == "fbm":
        s = x[:, 0]
        return _fbm_kernel(spec.hurst, s[:, None], s[None, :])
    if fam == "fbs":
        out = np.ones((grid.size, grid.size))
        for i, h in enumerate(spec.hurst):
            out *= _fbm_kernel(h, x[:, i][:, None], x[:, i][None, :])
        return out
    if fam == "ou":
        s = x[:, 0]
        return spec.sigma**2 / (2 * spec.beta) * np.exp(-spec.beta * np.abs(s[:, None] - s[None, :]))
    n = grid.size
    out = np.empty((n, n))
    for i in range(n):
        for k in range(i, n):
            out[i, k] = out[k, i] = analytic_covariance(spec, x[i, 0], x[k, 0])
    return out


def covariance_error(seq: AdmissibleSequence, K: int, grid: Grid) -> float:
    """Max over grid node pairs of ``|partial covariance - analytic covariance|``."""
    return float(np.max(np.abs(partial_covariance_matrix(seq, K, grid) - analytic_covariance_matrix(seq.spec, grid))))


# -- weights and regularity -----------------------------------------------------------

def sup_norms(seq: AdmissibleSequence, grid: Grid, count: int | None = None) -> np.ndarray:
    return np.max(np.abs(seq.matrix(grid, count)), axis=1)


def sup_norm_table(seq: AdmissibleSequence, count: int, grid: Grid, margin: int | None = None) -> np.ndarray:
    """Nonincreasing weights ``nu_j = max_{j <= k <= count + margin} ||f_k||_grid``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    margin = count if margin is None else margin
    n = min(seq.count, count + margin)
    if n < count:
        raise ValueError(f"sequence provides only {seq.count} functions")
    norms = sup_norms(seq, grid, n)
    nu = np.maximum.accumulate(norms[::-1])[::-1]
    return nu[:count].copy()


def holder_quotients(seq: AdmissibleSequence, grid: Grid, a: float, count: int | None = None) -> np.ndarray:
    """Discrete Hoelder quotients ``max |f(t_{k+1}) - f(t_k)| / h^a`` per function (d = 1)."""
    if grid.d != 1:
        raise ValueError("holder_quotients supports d = 1 grids")
    F = seq.matrix(grid, count)
    h = grid.T / (grid.G - 1)
    return np.max(np.abs(np.diff(F, axis=1)), axis=1) / h**a
