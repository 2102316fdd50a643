"""Product functional quantizers ``X_hat = sum_{j <= m} q_j(xi_j) f_j`` and their distortions.

Monte Carlo sampling is reproducible: the standard normals of sample ``i`` come
from a Philox stream keyed by ``(seed, i)``, coordinate ``j`` being the
``j``-th draw of that stream. Samples are processed in fixed-size chunks and
per-sample results are reduced in index order, so estimates do not depend on
the number of worker threads.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import allocation as alloc
from . import gauss1d
from .expansions import AdmissibleSequence, Grid, GridPath, ProcessSpec, default_grid, sequence_for, sup_norm_table, sup_norms

__all__ = [
    "ProductQuantizer",
    "DistortionReport",
    "TailEstimate",
    "TailScan",
    "PathSample",
    "CodebookTooLarge",
    "build",
    "standard_normals",
    "simulate_path",
    "sample_paths",
    "encode_coordinatewise",
    "decode",
    "enumerate_codebook",
    "codebook_arrays",
    "codebook_document",
    "nn_encode",
    "mc_distortion",
    "truncation_tail",
    "tail_scan",
    "l2_product_distortion",
    "paired_se",
    "default_depth",
    "default_threads",
]

CHUNK = 256
CODEBOOK_CAP = 10**6
DEFAULT_SAMPLES = 10_000
Z95 = 1.959963984540054


class CodebookTooLarge(ValueError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"codebook has {size} atoms, above the cap of {cap}")
        self.size = size
        self.cap = cap


def default_threads() -> int:
    env = os.environ.get("FUNQ_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def default_depth(m: int) -> int:
    return max(4096, 64 * m)


@dataclass(frozen=True, eq=False)
class ProductQuantizer:
    sequence: AdmissibleSequence
    allocation: alloc.Allocation
    scalar_quantizers: tuple[gauss1d.ScalarQuantizer, ...]
    order: float
    grid: Grid
    weight_mode: str = "empirical"

    def __post_init__(self):
        if tuple(q.levels for q in self.scalar_quantizers) != self.allocation.levels:
            raise ValueError("scalar quantizer levels do not match the allocation")
        if self.allocation.product > self.allocation.budget:
            raise ValueError("codebook cardinality exceeds the budget")

    @property
    def m(self) -> int:
        return self.allocation.block_length

    @property
    def levels(self) -> tuple[int, ...]:
        return self.allocation.levels

    @property
    def budget(self) -> int:
        return self.allocation.budget

    @property
    def codebook_size(self) -> int:
        return self.allocation.product

    @property
    def cached_f(self) -> np.ndarray:
        """``(m, nodes)`` values of the quantized expansion functions."""
        return self.sequence.matrix(self.grid, self.m)


def _weights(seq: AdmissibleSequence, grid: Grid, mode: str) -> np.ndarray:
    if mode == "empirical":
        return sup_norm_table(seq, seq.count, grid, margin=0)
    if mode == "theoretical":
        return alloc.nu_theoretical(seq.decay.theta, seq.decay.gamma, seq.count)
    raise ValueError(f"unknown weight mode {mode!r}; expected 'empirical' or 'theoretical'")


def build(spec: ProcessSpec, budget: int, order: float = 2.0, grid: Grid | None = None,
          weights: str = "empirical", depth: int | None = None, m: int | None = None,
          sequence: AdmissibleSequence | None = None) -> ProductQuantizer:
    """Product quantizer with automatic block length and floor bit allocation.

    Parameters
    ----------
    spec : ProcessSpec
    budget : int
        Codebook budget ``N``; the allocation satisfies ``prod N_j <= N``.
    order : float
        ``r``; scalar quantizers are designed for ``max(r, 1)``.
    grid : Grid, optional
        Defaults to the family's default grid.
    weights : {"empirical", "theoretical"}
        Grid sup-norms (running max from the right) or ``j^-theta log(1+j)^gamma``.
    depth : int, optional
        Number of expansion functions held (truncation depth ``K``);
        defaults to ``max(4096, 64 m)``.
    m : int, optional
        Force the block length instead of the automatic choice.
    sequence : AdmissibleSequence, optional
        Reuse a prebuilt sequence for ``spec`` (must hold at least ``depth`` functions).
    """
    if int(budget) != budget or budget < 1:
        raise ValueError("budget must be a positive integer")
    if not order > 0:
        raise ValueError("order must be positive")
    grid = grid or default_grid(spec.T, spec.dimension)
    count = depth or 4096
    if sequence is None or sequence.count < count:
        sequence = sequence_for(spec, count)
    nu = _weights(sequence, grid, weights)
    if m is None:
        m = alloc.choose_block_length(budget, nu)
    if depth is None and default_depth(m) > sequence.count:
        sequence = sequence_for(spec, default_depth(m))
        nu = _weights(sequence, grid, weights)
    allocation = alloc.integer_allocation(nu, m, int(budget))
    design = max(float(order), 1.0)
    sq = tuple(gauss1d.build_quantizer(n, design) for n in allocation.levels)
    return ProductQuantizer(sequence, allocation, sq, float(order), grid, weights)


# -- random paths --------------------------------------------------------------

def standard_normals(seed: int, index: int, count: int) -> np.ndarray:
    """First ``count`` standard normals of the stream keyed by ``(seed, index)``."""
    if not 0 <= seed < 2**64 or not 0 <= index < 2**64:
        raise ValueError("seed and sample index must lie in [0, 2^64)")
    gen = np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(index)))
    return gen.standard_normal(count)


def simulate_path(seq: AdmissibleSequence, K: int, grid: Grid, seed: int = 0, index: int = 0,
                  xi: np.ndarray | None = None) -> tuple[np.ndarray, GridPath]:
    """``(xi, sum_{j <= K} xi_j f_j)`` for sample ``index``; pass ``xi`` to force coefficients."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if xi is None:
        xi = standard_normals(seed, index, K)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (K,):
        raise ValueError("xi must have length K")
    F = seq.matrix(grid, K)
    return xi, GridPath(grid, xi @ F)


@dataclass(frozen=True, eq=False)
class PathSample:
    """``M`` simulated paths truncated at depth ``K`` plus their leading coefficients."""

    seed: int
    depth: int
    grid: Grid
    xi: np.ndarray = field(repr=False)      # (M, keep)
    paths: np.ndarray = field(repr=False)   # (M, nodes)

    @property
    def samples(self) -> int:
        return self.paths.shape[0]

    @property
    def keep(self) -> int:
        return self.xi.shape[1]


def _chunks(M: int):
    return [(s, min(M, s + CHUNK)) for s in range(0, M, CHUNK)]


def _map(fn, items, threads: int | None):
    threads = threads or default_threads()
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def sample_paths(seq: AdmissibleSequence, M: int, K: int, grid: Grid, seed: int = 0,
                 keep: int = 0, threads: int | None = None) -> PathSample:
    if M < 1:
        raise ValueError("M must be >= 1")
    if not 1 <= K <= seq.count:
        raise ValueError(f"depth K={K} must lie in 1..{seq.count}")
    keep = min(max(keep, 0), K)
    F = seq.matrix(grid, K)

    def work(bounds):
        lo, hi = bounds
        Z = np.stack([standard_normals(seed, i, K) for i in range(lo, hi)])
        return Z[:, :keep].copy(), Z @ F

    parts = _map(work, _chunks(M), threads)
    xi = np.concatenate([p[0] for p in parts])
    paths = np.concatenate([p[1] for p in parts])
    xi.setflags(write=False)
    paths.setflags(write=False)
    return PathSample(seed=int(seed), depth=K, grid=grid, xi=xi, paths=paths)


# -- coding --------------------------------------------------------------------

def encode_coordinatewise(q: ProductQuantizer, xi) -> tuple[int, ...]:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 1 or len(xi) < q.m:
        raise ValueError(f"need at least m={q.m} coefficients")
    return tuple(gauss1d.encode(sq, x) for sq, x in zip(q.scalar_quantizers, xi[: q.m]))


def _coefficients(q: ProductQuantizer, index) -> np.ndarray:
    if len(index) != q.m:
        raise ValueError(f"multi-index arity {len(index)} != m={q.m}")
    return np.array([gauss1d.decode(sq, i) for sq, i in zip(q.scalar_quantizers, index)])


def decode(q: ProductQuantizer, index) -> GridPath:
    return GridPath(q.grid, _coefficients(q, index) @ q.cached_f)


def codebook_arrays(q: ProductQuantizer, cap: int = CODEBOOK_CAP):
    """``(indices, values, probs)``; atoms in lexicographic multi-index order."""
    size = q.codebook_size
    if size > cap:
        raise CodebookTooLarge(size, cap)
    idx = np.array(list(itertools.product(*(range(n) for n in q.levels))), dtype=np.int64).reshape(size, q.m)
    coef = np.stack([sq.codepoints[idx[:, j]] for j, sq in enumerate(q.scalar_quantizers)], axis=1)
    probs = np.ones(size)
    for j, sq in enumerate(q.scalar_quantizers):
        probs = probs * sq.cell_probs[idx[:, j]]
    return idx, coef @ q.cached_f, probs


def enumerate_codebook(q: ProductQuantizer, cap: int = CODEBOOK_CAP) -> list[tuple[tuple[int, ...], GridPath, float]]:
    idx, values, probs = codebook_arrays(q, cap)
    return [(tuple(int(v) for v in i), GridPath(q.grid, values[k]), float(probs[k])) for k, i in enumerate(idx)]


def codebook_document(q: ProductQuantizer, cap: int = CODEBOOK_CAP) -> dict:
    idx, values, probs = codebook_arrays(q, cap)
    return {
        "levels": list(q.levels),
        "m": q.m,
        "grid": q.grid.to_dict(),
        "atoms": [
            {"index": [int(v) for v in i], "prob": float(p), "values": [float(v) for v in row]}
            for i, p, row in zip(idx, probs, values)
        ],
    }


def _coarse_nodes(n: int) -> np.ndarray:
    step = max(1, n // 64)
    return np.arange(0, n, step)


def _nn_search(atoms: np.ndarray, X: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Brute-force sup-norm nearest atoms for rows of ``X``.

    A lower bound on a node subset prunes atoms farther than ``upper`` (the
    distance to a known atom); exact distances decide among survivors and the
    smallest atom index wins ties.
    """
    sub = _coarse_nodes(atoms.shape[1])
    A_sub = atoms[:, sub]
    best = np.empty(len(X), dtype=np.int64)
    dist = np.empty(len(X))
    for i, x in enumerate(X):
        lb = np.max(np.abs(A_sub - x[sub]), axis=1)
        cand = np.flatnonzero(lb <= upper[i] * (1.0 + 1e-9) + 1e-300)
        if cand.size == 0:
            cand = np.arange(len(atoms))
        d = np.max(np.abs(atoms[cand] - x), axis=1)
        k = int(np.argmin(d))
        best[i] = cand[k]
        dist[i] = d[k]
    return best, dist


def nn_encode(q: ProductQuantizer, path: GridPath, cap: int = CODEBOOK_CAP) -> tuple[int, ...]:
    """Multi-index of the sup-norm nearest codebook atom (lexicographically smallest on ties)."""
    idx, values, _ = codebook_arrays(q, cap)
    x = np.asarray(path.values)[None, :]
    best, _ = _nn_search(values, x, np.array([np.inf]))
    return tuple(int(v) for v in idx[best[0]])


# -- Monte Carlo -----------------------------------------------------------------

def _moment_estimate(d: np.ndarray, r: float):
    """``(mean(d^r))^(1/r)``, its delta-method SE, and per-sample influence values."""
    M = len(d)
    p = np.power(d, r)
    mu = float(np.sum(p) / M)
    if mu <= 0.0:
        return 0.0, 0.0, np.zeros(M)
    est = mu ** (1.0 / r)
    infl = (est / (r * mu)) * (p - mu)
    se = float(math.sqrt(np.sum(np.square(infl)) / (M - 1) / M)) if M > 1 else 0.0
    return est, se, infl


@dataclass(frozen=True, eq=False)
class DistortionReport:
    budget: int
    m: int
    levels: tuple[int, ...]
    order: float
    samples: int
    truncation_depth: int
    seed: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    bound: float
    bound_se: float
    tail_estimate: float
    l2_estimate: float
    l2_se: float
    nn_estimate: float | None = None
    nn_se: float | None = None
    influence: np.ndarray | None = field(default=None, repr=False)
    distances: np.ndarray | None = field(default=None, repr=False)
    nn_distances: np.ndarray | None = field(default=None, repr=False)
    l2_distances: np.ndarray | None = field(default=None, repr=False)

    CSV_FIELDS = ("budget", "m", "levels", "order", "samples", "depth", "seed", "estimate", "ci_low",
                  "ci_high", "se", "bound", "bound_se", "tail", "l2_estimate", "nn_estimate")

    def row(self) -> dict:
        return {
            "budget": self.budget,
            "m": self.m,
            "levels": ";".join(str(v) for v in self.levels),
            "order": self.order,
            "samples": self.samples,
            "depth": self.truncation_depth,
            "seed": self.seed,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "se": self.se,
            "bound": self.bound,
            "bound_se": self.bound_se,
            "tail": self.tail_estimate,
            "l2_estimate": self.l2_estimate,
            "nn_estimate": self.nn_estimate,
        }


def paired_se(a: DistortionReport, b: DistortionReport) -> float:
    """SE of ``a.estimate - b.estimate`` when both use the same sample set."""
    if a.influence is None or b.influence is None or len(a.influence) != len(b.influence):
        raise ValueError("reports must come from the same sample set")
    diff = a.influence - b.influence
    M = len(diff)
    return float(math.sqrt(np.sum(np.square(diff)) / (M - 1) / M))


def _resolve_sample(seq, M, K, grid, seed, keep, threads, sample):
    if sample is None:
        return sample_paths(seq, M, K, grid, seed, keep=keep, threads=threads)
    if sample.depth != K or sample.grid != grid or sample.seed != seed or sample.samples != M:
        raise ValueError("supplied sample does not match (M, K, grid, seed)")
    if sample.keep < keep:
        raise ValueError(f"supplied sample keeps {sample.keep} coefficients, need {keep}")
    return sample


def mc_distortion(q: ProductQuantizer, M: int = DEFAULT_SAMPLES, K: int | None = None, seed: int = 0,
                  with_nn: bool = False, threads: int | None = None, sample: PathSample | None = None,
                  cap: int = CODEBOOK_CAP) -> DistortionReport:
    """Monte Carlo sup-norm distortion of ``q`` with the bound decomposition.

    ``X`` is truncated at ``K`` terms. ``bound`` is
    ``sum_{j<=m} ||f_j|| e_j + tail`` where ``e_j`` is the scalar error at
    order ``r`` (``E|xi - q(xi)|`` for ``r < 1``) and ``tail`` is the MC
    estimate of the remainder ``sum_{m < j <= K} xi_j f_j`` at the same order.
    ``l2_estimate`` is the root mean square grid L2 error.
    """
    if M < 100:
        raise ValueError("M must be >= 100")
    K = min(default_depth(q.m), q.sequence.count) if K is None else K
    if K < q.m:
        raise ValueError(f"depth K={K} must be >= m={q.m}")
    r = q.order
    sample = _resolve_sample(q.sequence, M, K, q.grid, seed, q.m, threads, sample)
    F = q.cached_f
    w = q.grid.weights
    atoms = None
    if with_nn:
        _, atoms, _ = codebook_arrays(q, cap)

    def work(bounds):
        lo, hi = bounds
        xi = sample.xi[lo:hi, : q.m]
        X = sample.paths[lo:hi]
        coef = np.empty_like(xi)
        for j, sq in enumerate(q.scalar_quantizers):
            coef[:, j] = sq.codepoints[gauss1d.encode(sq, xi[:, j])]
        err = X - coef @ F
        d = np.max(np.abs(err), axis=1)
        l2 = np.sqrt(np.square(err) @ w)
        tail = np.max(np.abs(X - xi @ F), axis=1)
        nn = None
        if atoms is not None:
            _, nn = _nn_search(atoms, X, d)
        return d, l2, tail, nn

    parts = _map(work, _chunks(M), threads)
    d = np.concatenate([p[0] for p in parts])
    l2 = np.concatenate([p[1] for p in parts])
    tail = np.concatenate([p[2] for p in parts])

    est, se, infl = _moment_estimate(d, r)
    l2_est, l2_se, _ = _moment_estimate(l2, 2.0)
    r_bound = r if r >= 1.0 else 1.0
    tail_est, tail_se, _ = _moment_estimate(tail, r_bound)
    norms = np.max(np.abs(F), axis=1)
    scalar = np.array([gauss1d.distortion_r(sq, r_bound) for sq in q.scalar_quantizers])
    bound = float(np.sum(norms * scalar)) + tail_est
    nn_est = nn_se = None
    nn = None
    if atoms is not None:
        nn = np.concatenate([p[3] for p in parts])
        nn_est, nn_se, _ = _moment_estimate(nn, r)
    return DistortionReport(
        budget=q.budget, m=q.m, levels=q.levels, order=r, samples=M, truncation_depth=K, seed=int(seed),
        estimate=est, se=se, ci_low=est - Z95 * se, ci_high=est + Z95 * se,
        bound=bound, bound_se=tail_se, tail_estimate=tail_est, l2_estimate=l2_est, l2_se=l2_se,
        nn_estimate=nn_est, nn_se=nn_se, influence=infl, distances=d, nn_distances=nn, l2_distances=l2,
    )


@dataclass(frozen=True)
class TailEstimate:
    n: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float


def truncation_tail(seq: AdmissibleSequence, n: int, r: float = 2.0, M: int = DEFAULT_SAMPLES,
                    K: int | None = None, seed: int = 0, grid: Grid | None = None,
                    threads: int | None = None, sample: PathSample | None = None) -> TailEstimate:
    """MC estimate of ``(E||sum_{n <= j <= K} xi_j f_j||^r)^(1/r)``; zero for ``n > K``."""
    grid = grid or default_grid(seq.T, seq.dimension)
    K = seq.count if K is None else K
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > K:
        return TailEstimate(n, 0.0, 0.0, 0.0, 0.0)
    sample = _resolve_sample(seq, M, K, grid, seed, n - 1, threads, sample)
    F = seq.matrix(grid, K)[: n - 1]

    def work(bounds):
        lo, hi = bounds
        return np.max(np.abs(sample.paths[lo:hi] - sample.xi[lo:hi, : n - 1] @ F), axis=1)

    d = np.concatenate(_map(work, _chunks(sample.samples), threads))
    est, se, _ = _moment_estimate(d, r)
    return TailEstimate(n, est, se, est - Z95 * se, est + Z95 * se)


def envelope_shape(n, decay) -> np.ndarray:
    """``(log n)^(gamma + 1/2) n^-(theta - 1/2)`` (``(log n)^gamma`` if ``b + theta <= 0``)."""
    n = np.asarray(n, dtype=float)
    power = decay.gamma if decay.b + decay.theta <= 0 else decay.gamma + 0.5
    return np.log(n) ** power * n ** (-(decay.theta - 0.5))


@dataclass(frozen=True)
class TailScan:
    tails: tuple[TailEstimate, ...]
    constant: float
    envelope: tuple[float, ...]

    def dominated(self, slack: float = 3.0) -> tuple[bool, ...]:
        """Envelope >= estimate - slack * SE at each ``n`` after the fitting one."""
        return tuple(env >= t.estimate - slack * t.se for t, env in zip(self.tails, self.envelope))


def tail_scan(seq: AdmissibleSequence, ns, r: float = 2.0, M: int = DEFAULT_SAMPLES, K: int | None = None,
              seed: int = 0, grid: Grid | None = None, threads: int | None = None) -> TailScan:
    """Tail estimates on one shared sample, with the envelope constant fitted at ``min(ns)``."""
    ns = sorted(int(n) for n in ns)
    if ns[0] < 2:
        raise ValueError("tail indices must be >= 2")
    grid = grid or default_grid(seq.T, seq.dimension)
    K = seq.count if K is None else K
    keep = min(max(ns) - 1, K)
    sample = sample_paths(seq, M, K, grid, seed, keep=keep, threads=threads)
    tails = tuple(truncation_tail(seq, n, r, M, K, seed, grid, threads, sample) for n in ns)
    shape = envelope_shape(ns, seq.decay)
    C = tails[0].estimate / float(shape[0])
    return TailScan(tails, C, tuple(float(v) for v in C * shape))


def l2_product_distortion(q: ProductQuantizer, K: int | None = None) -> float:
    """Exact grid-L2 distortion ``sqrt(sum_{j<=m} e_j^2 ||f_j||^2 + sum_{m<j<=K} ||f_j||^2)``.

    Valid for stationary (``r = 2``) scalar quantizers; norms use the grid's
    trapezoid weights.
    """
    if q.order != 2.0:
        raise ValueError("the exact L2 decomposition requires order r = 2")
    K = q.sequence.count if K is None else K
    if K < q.m:
        raise ValueError("K must be >= m")
    F = q.sequence.matrix(q.grid, K)
    sq_norms = np.square(F) @ q.grid.weights
    e2 = np.array([sq.distortion**2 for sq in q.scalar_quantizers])
    return float(math.sqrt(np.sum(e2 * sq_norms[: q.m]) + np.sum(sq_norms[q.m:])))


def rate_scan(spec: ProcessSpec, budgets, order: float = 2.0, M: int = DEFAULT_SAMPLES, K: int | None = None,
              seed: int = 0, grid: Grid | None = None, threads: int | None = None, with_nn: bool = False,
              weights: str = "empirical") -> list[DistortionReport]:
    """Distortion reports for several budgets, all on one shared sample set."""
    grid = grid or default_grid(spec.T, spec.dimension)
    qs = []
    seq = None
    for N in budgets:
        q = build(spec, int(N), order, grid, weights=weights, depth=K, sequence=seq)
        seq = q.sequence
        qs.append(q)
    K = K or min(default_depth(max(q.m for q in qs)), seq.count)
    keep = max(q.m for q in qs)
    sample = sample_paths(seq, M, K, grid, seed, keep=keep, threads=threads)
    reports = []
    for q in qs:
        q = ProductQuantizer(seq, q.allocation, q.scalar_quantizers, q.order, grid, q.weight_mode)
        reports.append(mc_distortion(q, M, K, seed, with_nn=with_nn and q.codebook_size <= CODEBOOK_CAP,
                                     threads=threads, sample=sample))
    return reports
