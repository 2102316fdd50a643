"""Command-line front end.

Tabular results go to CSV (stdout unless ``--csv`` is given), codebooks to
JSON. Numbers are printed with 9 significant digits. Exit codes: 0 success,
1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import allocation as alloc
from . import gauss1d, specfun
from . import product_quant as pq
from .expansions import (
    ProcessSpec,
    covariance_error,
    default_grid,
    sequence_for,
    sup_norm_table,
    sup_norms,
)

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
SPEC_FIELDS = {"family", "T", "hurst", "beta", "sigma", "rho", "theta", "b", "grid"}
GRID_FIELDS = {"G"}


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


# -- spec documents ----------------------------------------------------------------

def _number(doc: dict, key: str):
    v = doc.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {key!r} must be a number")
    return float(v)


def parse_spec(document) -> tuple[ProcessSpec, int | None]:
    """Strictly parse a process document into ``(ProcessSpec, grid points per axis or None)``.

    ``document`` is a JSON string or an already decoded mapping.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError("process document must be a JSON object")
    unknown = sorted(set(document) - SPEC_FIELDS)
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]!r} in process document")
    if "family" not in document:
        raise ConfigError("field 'family' is required")
    family = document["family"]
    if not isinstance(family, str):
        raise ConfigError("field 'family' must be a string")

    hurst = document.get("hurst")
    if isinstance(hurst, list):
        if not all(isinstance(h, (int, float)) and not isinstance(h, bool) for h in hurst):
            raise ConfigError("field 'hurst' must hold numbers")
        hurst = tuple(float(h) for h in hurst)
    elif hurst is not None:
        hurst = _number(document, "hurst")
    if family == "fbs" and isinstance(hurst, float):
        hurst = (hurst,)

    G = None
    grid = document.get("grid")
    if grid is not None:
        if isinstance(grid, dict):
            bad = sorted(set(grid) - GRID_FIELDS)
            if bad:
                raise ConfigError(f"unknown field 'grid.{bad[0]}' in process document")
            grid = grid.get("G")
        if isinstance(grid, bool) or not isinstance(grid, int) or grid < 2:
            raise ConfigError("field 'grid' must give an integer G >= 2")
        G = grid

    fields = {k: _number(document, k) for k in ("beta", "sigma", "rho", "theta", "b")}
    T = _number(document, "T")
    try:
        spec = ProcessSpec(family=family, T=1.0 if T is None else T, hurst=hurst, **fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return spec, G


def load_spec(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read process document: {exc}") from None
    spec, G = parse_spec(text)
    return spec, default_grid(spec.T, spec.dimension, G)


# -- output -------------------------------------------------------------------------

def _emit(rows, header, path: str | None, comments=()):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    for line in comments:
        buf.write(f"# {line}\n")
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _positive_int(name, value, minimum=1):
    if value < minimum:
        raise ConfigError(f"--{name} must be >= {minimum}")
    return value


def parse_weights(text: str) -> np.ndarray:
    """Inline comma-separated weights or a path to a one-column CSV file."""
    p = Path(text)
    if p.is_file():
        vals = []
        for line in p.read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cell = line.split(",")[-1].strip()
            try:
                vals.append(float(cell))
            except ValueError:
                if vals:
                    raise ConfigError(f"bad weight entry {cell!r}") from None
                # header row
        data = vals
    else:
        try:
            data = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse weights {text!r}") from None
    nu = np.asarray(data, dtype=float)
    if nu.size == 0 or np.any(nu <= 0) or np.any(~np.isfinite(nu)):
        raise ConfigError("weights must be positive finite numbers")
    if np.any(np.diff(nu) > 0):
        raise ConfigError("weights must be nonincreasing")
    return nu


_POW = re.compile(r"^\s*(\d+)\s*\^\s*(\d+)\s*$")


def _budget(token: str) -> int:
    m = _POW.match(token)
    if m:
        return int(m.group(1)) ** int(m.group(2))
    try:
        return int(token)
    except ValueError:
        raise ConfigError(f"cannot parse budget {token!r}") from None


def parse_budgets(text: str) -> list[int]:
    """``"2^2..2^16"`` (every power of the base in between), ``"a..b"`` (doubling) or a comma list."""
    if ".." in text:
        lo, hi = (s.strip() for s in text.split("..", 1))
        m_lo, m_hi = _POW.match(lo), _POW.match(hi)
        if m_lo and m_hi and m_lo.group(1) == m_hi.group(1):
            base = int(m_lo.group(1))
            out = [base**k for k in range(int(m_lo.group(2)), int(m_hi.group(2)) + 1)]
        else:
            a, b = _budget(lo), _budget(hi)
            out = []
            while a <= b:
                out.append(a)
                a *= 2
    else:
        out = [_budget(t) for t in text.split(",") if t.strip()]
    if not out or min(out) < 1:
        raise ConfigError("budgets must be positive integers")
    return out


# -- commands -------------------------------------------------------------------------

def cmd_scalar(args) -> int:
    _positive_int("levels", args.levels)
    if not args.order > 0:
        raise ConfigError("--order must be positive")
    q = gauss1d.build_quantizer(args.levels, args.order)
    if args.json:
        doc = {"levels": q.levels, "order": q.order, "codepoints": q.codepoints.tolist(),
               "thresholds": q.thresholds.tolist(), "cell_probs": q.cell_probs.tolist(),
               "distortion": gauss1d.distortion_r(q, args.order)}
        sys.stdout.write(json.dumps(doc) + "\n")
        return EXIT_OK
    rows = [(k + 1, q.codepoints[k], q.edges()[k], q.edges()[k + 1], q.cell_probs[k]) for k in range(q.levels)]
    _emit(rows, ("k", "codepoint", "lower", "upper", "prob"), args.csv,
          [f"distortion={fmt(gauss1d.distortion_r(q, args.order))}"])
    return EXIT_OK


def cmd_zeros(args) -> int:
    _positive_int("count", args.count)
    try:
        table = specfun.bessel_zeros(args.order, args.count)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = table.residuals()
    _emit(((j + 1, z, res[j]) for j, z in enumerate(table.zeros)), ("j", "zero", "residual"), args.csv)
    return EXIT_OK


def cmd_expansion(args) -> int:
    spec, grid = load_spec(args.process)
    _positive_int("count", args.count)
    if args.grid is not None:
        _positive_int("grid", args.grid, 2)
        grid = default_grid(spec.T, spec.dimension, args.grid)
    seq = sequence_for(spec, args.count)
    if args.dump:
        F = seq.matrix(grid, args.count)
        nodes = grid.nodes
        rows = ((j + 1, *np.atleast_1d(nodes[k]), F[j, k]) for j in range(args.count) for k in range(grid.size))
        tcols = ("t",) if spec.dimension == 1 else tuple(f"t{i + 1}" for i in range(spec.dimension))
        _emit(rows, ("j", *tcols, "value"), args.csv)
        return EXIT_OK
    norms = sup_norms(seq, grid)
    nu = sup_norm_table(seq, args.count, grid, margin=0)
    theo = alloc.nu_theoretical(seq.decay.theta, seq.decay.gamma, args.count)
    d = seq.decay
    _emit(((j + 1, norms[j], nu[j], theo[j]) for j in range(args.count)),
          ("j", "sup_norm", "nu_empirical", "nu_theoretical"), args.csv,
          [f"theta={fmt(d.theta)} gamma={fmt(d.gamma)} a={fmt(d.a)} b={fmt(d.b)}"])
    return EXIT_OK


def cmd_allocate(args) -> int:
    _positive_int("budget", args.budget)
    if (args.weights is None) == (args.theta is None):
        raise ConfigError("give exactly one of --weights or --theta")
    if args.weights is not None:
        nu = parse_weights(args.weights)
    else:
        if not args.theta > 0.5 or args.gamma < 0:
            raise ConfigError("need --theta > 1/2 and --gamma >= 0")
        nu = alloc.nu_theoretical(args.theta, args.gamma, alloc.SCAN_CAP)
    m = None
    if args.m != "auto":
        try:
            m = int(args.m)
        except ValueError:
            raise ConfigError("--m must be 'auto' or an integer") from None
        if not 1 <= m <= len(nu):
            raise ConfigError(f"--m must lie in 1..{len(nu)}")
    a = alloc.allocate(nu, args.budget, m)
    rows = [(j + 1, nu[j], a.continuous[j], a.levels[j]) for j in range(a.block_length)]
    _emit(rows, ("j", "nu", "z", "levels"), args.csv, [f"m={a.block_length}", f"product={a.product}"])
    return EXIT_OK


def _build(args, spec, grid):
    _positive_int("budget", args.budget)
    if not args.order > 0:
        raise ConfigError("--order must be positive")
    if args.depth is not None:
        _positive_int("depth", args.depth)
    return pq.build(spec, args.budget, args.order, grid, weights=args.weights, depth=args.depth)


def cmd_build(args) -> int:
    spec, grid = load_spec(args.process)
    q = _build(args, spec, grid)
    doc = pq.codebook_document(q, args.cap)
    text = json.dumps(doc, separators=(",", ":"))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text + "\n")
    return EXIT_OK


def _mc_args(args):
    _positive_int("samples", args.samples, 100)
    if args.seed < 0:
        raise ConfigError("--seed must be >= 0")
    if args.threads is not None:
        _positive_int("threads", args.threads)


def cmd_distortion(args) -> int:
    spec, grid = load_spec(args.process)
    _mc_args(args)
    q = _build(args, spec, grid)
    K = args.depth or min(pq.default_depth(q.m), q.sequence.count)
    if K < q.m:
        raise ConfigError(f"--depth must be >= m={q.m}")
    rep = pq.mc_distortion(q, args.samples, K, args.seed, with_nn=args.nn, threads=args.threads)
    row = rep.row()
    _emit([[row[k] for k in pq.DistortionReport.CSV_FIELDS]], pq.DistortionReport.CSV_FIELDS, args.csv)
    return EXIT_OK


def cmd_tail(args) -> int:
    spec, grid = load_spec(args.process)
    _mc_args(args)
    if args.start < 2 or args.stop < args.start:
        raise ConfigError("need 2 <= --from <= --to")
    ns = []
    n = args.start
    while n <= args.stop:
        ns.append(n)
        n *= 2
    K = args.depth or max(4096, 16 * args.stop)
    if K <= args.stop:
        raise ConfigError("--depth must exceed --to")
    seq = sequence_for(spec, K)
    scan = pq.tail_scan(seq, ns, args.order, args.samples, K, args.seed, grid, args.threads)
    rows = [(t.n, t.estimate, t.se, t.ci_low, t.ci_high, env, int(ok))
            for t, env, ok in zip(scan.tails, scan.envelope, scan.dominated())]
    _emit(rows, ("n", "estimate", "se", "ci_low", "ci_high", "envelope", "dominated"), args.csv,
          [f"C={fmt(scan.constant)}"])
    return EXIT_OK


def cmd_ratescan(args) -> int:
    spec, grid = load_spec(args.process)
    _mc_args(args)
    budgets = parse_budgets(args.budgets)
    if not args.order > 0:
        raise ConfigError("--order must be positive")
    reps = pq.rate_scan(spec, budgets, args.order, args.samples, args.depth, args.seed, grid,
                        args.threads, with_nn=args.nn, weights=args.weights)
    rows = [(r.budget, r.m, ";".join(map(str, r.levels)), r.estimate, r.ci_low, r.ci_high, r.bound, r.nn_estimate)
            for r in reps]
    _emit(rows, ("budget", "m", "levels", "estimate", "ci_low", "ci_high", "bound", "nn_estimate"), args.csv)
    return EXIT_OK


def cmd_covcheck(args) -> int:
    spec, _ = load_spec(args.process)
    grid = default_grid(spec.T, spec.dimension, args.G)
    rows = []
    seq = sequence_for(spec, max(args.K))
    for K in args.K:
        rows.append((K, covariance_error(seq, K, grid)))
    _emit(rows, ("K", "max_error"), args.csv, [f"G={args.G} d={spec.dimension}"])
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

def _add_mc(p, budget=True):
    p.add_argument("--process", required=True, help="process spec JSON file")
    if budget:
        p.add_argument("--budget", type=int, required=True)
    p.add_argument("--order", type=float, default=2.0, help="moment order r")
    p.add_argument("--weights", choices=("empirical", "theoretical"), default="empirical")
    p.add_argument("--depth", type=int, default=None, help="truncation depth K")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funq", description="Product functional quantization of Gaussian processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scalar", help="optimal N(0,1) quantizer")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--order", type=float, default=2.0)
    p.add_argument("--csv")
    p.add_argument("--json", action="store_true", help="print JSON instead of CSV")
    p.set_defaults(func=cmd_scalar)

    p = sub.add_parser("zeros", help="positive zeros of J_nu")
    p.add_argument("--order", type=float, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_zeros)

    p = sub.add_parser("expansion", help="sup-norms and weights of an admissible sequence")
    p.add_argument("--process", required=True)
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--grid", type=int, default=None, help="grid points per axis")
    p.add_argument("--dump", action="store_true", help="emit (j, t, f_j(t)) instead of the weight table")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_expansion)

    p = sub.add_parser("allocate", help="block length and integer levels")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--weights", help="comma list or one-column CSV file")
    p.add_argument("--theta", type=float, help="theoretical weights j^-theta log(1+j)^gamma")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--m", default="auto", help="'auto' or a block length")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("build", help="write the product codebook as JSON")
    _add_mc(p)
    p.add_argument("--cap", type=int, default=pq.CODEBOOK_CAP)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build)

    for name, func, helptext in (("distortion", cmd_distortion, "Monte Carlo distortion report"),
                                 ("ratescan", cmd_ratescan, "distortion over a range of budgets"),
                                 ("tail", cmd_tail, "truncation tail scan")):
        p = sub.add_parser(name, help=helptext)
        _add_mc(p, budget=name == "distortion")
        p.add_argument("--samples", type=int, default=pq.DEFAULT_SAMPLES)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: FUNQ_THREADS or CPU count)")
        p.add_argument("--csv")
        if name != "tail":
            p.add_argument("--nn", action="store_true", help="also estimate the nearest-neighbour distortion")
        p.set_defaults(func=func)
    sub.choices["ratescan"].add_argument("--budgets", default="2^2..2^16")
    sub.choices["tail"].add_argument("--from", dest="start", type=int, default=8)
    sub.choices["tail"].add_argument("--to", dest="stop", type=int, default=512)

    p = sub.add_parser("covcheck", help="covariance reconstruction error")
    p.add_argument("--process", required=True)
    p.add_argument("--K", type=int, nargs="+", default=[2000])
    p.add_argument("--G", type=int, default=33)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_covcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, pq.CodebookTooLarge, alloc.InfeasibleBlockLength, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (gauss1d.ConvergenceError, specfun.BracketError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
