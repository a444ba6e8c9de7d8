"""Data loading, synthetic generation, report emission, and the CLI.

Supported input formats: LIBSVM sparse lines (``label idx:val ...`` with
1-based strictly increasing indices) and header-free dense CSV with the
response as the last column. Reports are JSON documents validated by the
schema shipped alongside this module; solution vectors are plain text,
one float per line at full precision.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .alm import AlmParams, SolveReport, kkt_residual, primal_objective, ssnal_solve
from .baselines import BaselineParams, admm_solve, apg_solve, ladmm_solve
from .levelset import levelset_solve
from .linops import DesignMatrix
from .problem import ProblemData

__all__ = [
    "LibsvmFormatError",
    "parse_libsvm",
    "parse_csv_dense",
    "write_libsvm",
    "write_csv",
    "normalize_columns",
    "lambda_from_alphas",
    "generate_synthetic",
    "write_solution",
    "read_solution",
    "emit_report",
    "cli_main",
    "main",
]

SCHEMA_VERSION = 1
_BASELINES = {"admm", "iadmm", "ladmm", "apg"}
_SOLVERS = {"ssnal"} | _BASELINES


class LibsvmFormatError(ValueError):
    """Malformed LIBSVM input; carries the offending 1-based line number."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _iter_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", errors="replace") as fh:
            yield from fh
    elif hasattr(source, "read"):
        yield from source
    else:
        yield from source


def parse_libsvm(source):
    """Parse LIBSVM text into a sparse design matrix and response vector.

    Any malformed token is fatal and reported with its line number. The
    feature count is the largest index seen.
    """
    rows, cols, vals, b = [], [], [], []
    m = 0
    for lineno, line in enumerate(_iter_lines(source), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        tokens = stripped.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(lineno, f"non-numeric label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(lineno, f"missing ':' in {tok!r}")
            if not idx_s.isdigit():
                raise LibsvmFormatError(lineno, f"non-numeric index in {tok!r}")
            idx = int(idx_s)
            if idx <= 0:
                raise LibsvmFormatError(lineno, "indices are 1-based")
            if idx <= prev:
                raise LibsvmFormatError(lineno, "indices must be strictly increasing")
            if "_" in val_s:
                raise LibsvmFormatError(lineno, f"non-numeric value in {tok!r}")
            try:
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(lineno, f"non-numeric value in {tok!r}") from None
            prev = idx
            rows.append(m)
            cols.append(idx - 1)
            vals.append(val)
        b.append(label)
        m += 1
    if m == 0:
        raise LibsvmFormatError(0, "no samples")
    n = max(cols) + 1 if cols else 0
    A = sp.csc_matrix(
        (np.asarray(vals, dtype=np.float64),
         (np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp))),
        shape=(m, n))
    return DesignMatrix(A), np.asarray(b, dtype=np.float64)


def parse_csv_dense(source):
    """Parse header-free CSV; the last column is the response."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", errors="replace") as fh:
            raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    else:
        raw = np.loadtxt(source, delimiter=",", ndmin=2)
    if raw.shape[1] < 2:
        raise ValueError("need at least one feature column plus the response")
    return DesignMatrix(raw[:, :-1]), np.ascontiguousarray(raw[:, -1])


def write_libsvm(A, b, path):
    """Serialize to LIBSVM text; zeros are dropped, values keep full precision."""
    if not isinstance(A, DesignMatrix):
        A = DesignMatrix(A)
    dense = A.toarray()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(A.m):
            parts = [f"{b[i]:.17g}"]
            row = dense[i]
            for j in np.flatnonzero(row):
                parts.append(f"{j + 1}:{row[j]:.17g}")
            fh.write(" ".join(parts) + "\n")


def write_csv(A, b, path):
    """Serialize dense CSV with the response as the last column."""
    if not isinstance(A, DesignMatrix):
        A = DesignMatrix(A)
    dense = A.toarray()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(A.m):
            cells = [f"{v:.17g}" for v in dense[i]] + [f"{b[i]:.17g}"]
            fh.write(",".join(cells) + "\n")


def normalize_columns(A):
    """Scale columns with norm above one down to unit norm.

    Returns the rescaled matrix and the per-column divisors, so a solution
    of the scaled problem maps back through ``x[j] / scales[j]``. Columns
    already at or below unit norm, including zero columns, keep scale one,
    which makes the operation idempotent.
    """
    if not isinstance(A, DesignMatrix):
        A = DesignMatrix(A)
    norms = A.col_norms()
    scales = np.maximum(norms, 1.0)
    return A.scale_cols(scales), scales


def lambda_from_alphas(A, b, alpha1, alpha2):
    """Penalty weights from the relative grid: ``lam1 = alpha1 ||A.T b||_inf``
    and ``lam2 = alpha2 * lam1``."""
    if not (0.0 < alpha1 < 1.0):
        raise ValueError("alpha1 must lie strictly between 0 and 1")
    if alpha2 <= 0.0:
        raise ValueError("alpha2 must be positive")
    if not isinstance(A, DesignMatrix):
        A = DesignMatrix(A)
    atb = A.rmat_vec(np.asarray(b, dtype=np.float64))
    lam_max = float(np.max(np.abs(atb))) if atb.size else 0.0
    lam1 = alpha1 * lam_max
    return lam1, alpha2 * lam1


def generate_synthetic(m, n, n_blocks=10, noise_sd=0.1, density=1.0, seed=0,
                       zero_frac=0.5, amplitude=1.0):
    """Random instance with a piecewise-constant ground truth.

    The truth splits [0, n) into ``n_blocks`` contiguous blocks; each block
    is zero with probability ``zero_frac`` and constant Gaussian amplitude
    otherwise. The design is standard normal, dense when ``density >= 1``
    and sparse with that fill fraction otherwise. Everything is
    deterministic for a fixed seed.

    Returns
    -------
    (DesignMatrix, b, x_true)
    """
    if n_blocks < 1 or n_blocks > n:
        raise ValueError("need 1 <= n_blocks <= n")
    rng = np.random.default_rng(seed)
    if n_blocks > 1:
        cuts = np.sort(rng.choice(np.arange(1, n), size=n_blocks - 1, replace=False))
    else:
        cuts = np.zeros(0, dtype=np.intp)
    bounds = np.concatenate(([0], cuts, [n]))
    x_true = np.zeros(n)
    for g in range(n_blocks):
        if rng.uniform() >= zero_frac:
            x_true[bounds[g]:bounds[g + 1]] = amplitude * rng.normal()
    if density >= 1.0:
        A = DesignMatrix(rng.standard_normal((m, n)))
    else:
        mat = sp.random(m, n, density=density, format="csc", random_state=rng,
                        data_rvs=rng.standard_normal)
        A = DesignMatrix(mat)
    b = A.mat_vec(x_true)
    if noise_sd > 0:
        b = b + noise_sd * rng.standard_normal(m)
    return A, b, x_true


def write_solution(x, path):
    """One float per line, 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(x, dtype=np.float64):
            fh.write(f"{v:.17g}\n")


def read_solution(path):
    with open(path, "r", encoding="utf-8") as fh:
        return np.asarray([float(line) for line in fh if line.strip()], dtype=np.float64)


def _run_record(report, include_trace=False):
    rec = {
        "solver": report.solver,
        "status": report.status,
        "eta": float(report.eta),
        "primal_obj": float(report.primal_obj),
        "outer_iters": int(report.outer_iters),
        "ssn_iters": int(report.ssn_iters),
        "cg_iters": int(report.cg_iters),
        "nnz_x": int(report.nnz_x),
        "nnz_bx": int(report.nnz_bx),
        "wall_time_s": float(report.wall_time_s),
    }
    if np.isfinite(report.dual_quad):
        rec["dual_quad"] = float(report.dual_quad)
    if np.isfinite(report.sigma_final):
        rec["sigma_final"] = float(report.sigma_final)
    if include_trace:
        rec["trace"] = report.trace
    return rec


def emit_report(reports, config, path=None, include_trace=False, extra_fields=None):
    """Build the JSON report document; write it when a path is given.

    ``reports`` may be a single record or a list; a bench run shares one
    config echo across all runs. Returns the document as a dict.
    """
    if isinstance(reports, SolveReport):
        reports = [reports]
    runs = []
    for i, rep in enumerate(reports):
        rec = _run_record(rep, include_trace)
        if extra_fields and i < len(extra_fields) and extra_fields[i]:
            rec.update(extra_fields[i])
        runs.append(rec)
    doc = {"schema_version": SCHEMA_VERSION, "config": dict(config), "runs": runs}
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return doc


# --------------------------------------------------------------------------
# CLI


class ConfigError(ValueError):
    pass


_THREAD_LIMITER = None


def _apply_thread_cap():
    """Honor FUSED_KITE_THREADS when set; invalid values warn and are ignored."""
    global _THREAD_LIMITER
    raw = os.environ.get("FUSED_KITE_THREADS")
    if not raw:
        return
    try:
        cap = int(raw)
        if cap < 1:
            raise ValueError
    except ValueError:
        print(f"warning: ignoring FUSED_KITE_THREADS={raw!r} (want a positive integer)",
              file=sys.stderr)
        return
    try:
        import threadpoolctl
        _THREAD_LIMITER = threadpoolctl.threadpool_limits(limits=cap)
    except ImportError:  # pragma: no cover
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(cap))


def _add_data_args(p):
    p.add_argument("--data", required=True, help="input data file")
    p.add_argument("--format", choices=["auto", "libsvm", "csv"], default="auto",
                   help="input format; auto picks csv for .csv files")
    p.add_argument("--normalize", action="store_true",
                   help="scale columns with norm above one to unit norm")


def _add_lambda_args(p):
    p.add_argument("--alpha1", type=float, help="l1 weight as a fraction of ||A'b||_inf")
    p.add_argument("--alpha2", type=float, help="fusion weight as a multiple of lambda1")
    p.add_argument("--lambda1", type=float, help="absolute l1 weight")
    p.add_argument("--lambda2", type=float, help="absolute fusion weight")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fusedkite",
        description="Fused lasso solvers with a semismooth Newton core")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve the penalized problem")
    _add_data_args(ps)
    _add_lambda_args(ps)
    ps.add_argument("--solver", choices=sorted(_SOLVERS), default="ssnal")
    ps.add_argument("--tol", type=float, default=1e-6, help="KKT residual target")
    ps.add_argument("--max-iter", type=int, default=None,
                    help="iteration cap (outer iterations for ssnal)")
    ps.add_argument("--time-limit", type=float, default=None, help="seconds")
    ps.add_argument("--out", help="write a JSON report here")
    ps.add_argument("--sol", help="write the solution vector here")
    ps.add_argument("--trace", action="store_true", help="include the iteration trace")

    pc = sub.add_parser("solve-constrained",
                        help="minimize the penalty subject to a residual bound")
    _add_data_args(pc)
    _add_lambda_args(pc)
    grp = pc.add_mutually_exclusive_group(required=True)
    grp.add_argument("--delta", type=float, help="residual norm target")
    grp.add_argument("--gamma", type=float, help="target as a fraction of ||b||")
    pc.add_argument("--tol", type=float, default=1e-6)
    pc.add_argument("--max-iter", type=int, default=60, help="bisection budget")
    pc.add_argument("--out", help="write a JSON report here")
    pc.add_argument("--sol", help="write the solution vector here")
    pc.add_argument("--trace", action="store_true")

    pb = sub.add_parser("bench", help="run several solvers on one instance")
    _add_data_args(pb)
    _add_lambda_args(pb)
    pb.add_argument("--solvers", default="ssnal,admm,iadmm,ladmm,apg",
                    help="comma-separated subset of " + ",".join(sorted(_SOLVERS)))
    pb.add_argument("--tol", type=float, default=1e-6)
    pb.add_argument("--max-iter", type=int, default=None)
    pb.add_argument("--time-limit", type=float, default=None)
    pb.add_argument("--out", help="write a JSON report here")

    pk = sub.add_parser("check", help="print the KKT residual of a solution file")
    _add_data_args(pk)
    _add_lambda_args(pk)
    pk.add_argument("--sol", required=True, help="solution vector file")

    pg = sub.add_parser("gen", help="write a synthetic instance")
    pg.add_argument("--m", type=int, required=True)
    pg.add_argument("--n", type=int, required=True)
    pg.add_argument("--blocks", type=int, default=10)
    pg.add_argument("--noise", type=float, default=0.1)
    pg.add_argument("--density", type=float, default=1.0)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--format", choices=["libsvm", "csv"], default="libsvm")
    pg.add_argument("--out", required=True)
    return parser


def _load_data(args):
    fmt = args.format
    if fmt == "auto":
        fmt = "csv" if str(args.data).endswith(".csv") else "libsvm"
    if fmt == "csv":
        A, b = parse_csv_dense(args.data)
    else:
        A, b = parse_libsvm(args.data)
    scales = None
    if getattr(args, "normalize", False):
        A, scales = normalize_columns(A)
    return A, b, fmt, scales


def _resolve_lambdas(args, A, b):
    has_alpha = args.alpha1 is not None or args.alpha2 is not None
    has_lambda = args.lambda1 is not None or args.lambda2 is not None
    if has_alpha == has_lambda:
        raise ConfigError("give either --alpha1/--alpha2 or --lambda1/--lambda2")
    if has_alpha:
        if args.alpha1 is None or args.alpha2 is None:
            raise ConfigError("--alpha1 and --alpha2 go together")
        lam1, lam2 = lambda_from_alphas(A, b, args.alpha1, args.alpha2)
    else:
        if args.lambda1 is None or args.lambda2 is None:
            raise ConfigError("--lambda1 and --lambda2 go together")
        lam1, lam2 = args.lambda1, args.lambda2
        if lam1 < 0 or lam2 < 0:
            raise ConfigError("penalty weights must be nonnegative")
    return lam1, lam2


def _run_one(name, problem, tol, max_iter, time_limit):
    if name == "ssnal":
        params = AlmParams(kkt_tol=tol, max_outer=max_iter or 100, time_limit=time_limit)
        x, _, report = ssnal_solve(problem, params=params)
        return x, report
    bp = BaselineParams(tol=tol, max_iter=max_iter or 20000, time_limit=time_limit)
    if name == "admm":
        return admm_solve(problem, params=bp, mode="exact")
    if name == "iadmm":
        return admm_solve(problem, params=bp, mode="inexact")
    if name == "ladmm":
        return ladmm_solve(problem, params=bp)
    if name == "apg":
        return apg_solve(problem, params=bp)
    raise ConfigError(f"unknown solver {name!r}")


def _base_config(args, fmt, lam1, lam2):
    cfg = {
        "data": str(args.data),
        "format": fmt,
        "normalize": bool(getattr(args, "normalize", False)),
        "lambda1": lam1,
        "lambda2": lam2,
    }
    if args.alpha1 is not None:
        cfg["alpha1"] = args.alpha1
        cfg["alpha2"] = args.alpha2
    return cfg


def _cmd_solve(args):
    A, b, fmt, _ = _load_data(args)
    lam1, lam2 = _resolve_lambdas(args, A, b)
    problem = ProblemData(A=A, b=b, lam1=lam1, lam2=lam2)
    x, report = _run_one(args.solver, problem, args.tol, args.max_iter, args.time_limit)
    cfg = _base_config(args, fmt, lam1, lam2)
    cfg.update({"solver": args.solver, "tol": args.tol,
                "max_iter": args.max_iter, "time_limit": args.time_limit})
    if args.sol:
        write_solution(x, args.sol)
    if args.out:
        emit_report(report, cfg, path=args.out, include_trace=args.trace)
    print(f"{report.solver}: status={report.status} eta={report.eta:.3e} "
          f"obj={report.primal_obj:.9e} iters={report.outer_iters} "
          f"time={report.wall_time_s:.2f}s")
    return 0 if report.status == "Optimal" else 3


def _cmd_solve_constrained(args):
    A, b, fmt, _ = _load_data(args)
    lam1, lam2 = _resolve_lambdas(args, A, b)
    problem = ProblemData(A=A, b=b, lam1=lam1, lam2=lam2)
    delta = args.delta if args.delta is not None else args.gamma * float(np.linalg.norm(b))
    x, mu, report = levelset_solve(problem, delta, tol=args.tol, max_iter=args.max_iter)
    cfg = _base_config(args, fmt, lam1, lam2)
    cfg.update({"delta": delta, "tol": args.tol, "max_iter": args.max_iter})
    if args.sol:
        write_solution(x, args.sol)
    if args.out:
        emit_report(report, cfg, path=args.out, include_trace=args.trace,
                    extra_fields=[{"mu": mu}])
    print(f"{report.solver}: status={report.status} eta={report.eta:.3e} "
          f"mu={mu:.6e} penalty={report.primal_obj:.9e} probes={report.outer_iters}")
    return 0 if report.status == "Optimal" else 3


def _cmd_bench(args):
    A, b, fmt, _ = _load_data(args)
    lam1, lam2 = _resolve_lambdas(args, A, b)
    problem = ProblemData(A=A, b=b, lam1=lam1, lam2=lam2)
    names = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for name in names:
        if name not in _SOLVERS:
            raise ConfigError(f"unknown solver {name!r}")
    reports = []
    print(f"{'solver':<8} {'status':<10} {'eta':>10} {'objective':>16} "
          f"{'iters':>7} {'time_s':>8}")
    for name in names:
        _, report = _run_one(name, problem, args.tol, args.max_iter, args.time_limit)
        reports.append(report)
        print(f"{report.solver:<8} {report.status:<10} {report.eta:>10.2e} "
              f"{report.primal_obj:>16.9e} {report.outer_iters:>7d} "
              f"{report.wall_time_s:>8.2f}")
    if args.out:
        cfg = _base_config(args, fmt, lam1, lam2)
        cfg.update({"solvers": names, "tol": args.tol, "max_iter": args.max_iter,
                    "time_limit": args.time_limit})
        emit_report(reports, cfg, path=args.out)
    return 0 if all(r.status == "Optimal" for r in reports) else 3


def _cmd_check(args):
    A, b, fmt, _ = _load_data(args)
    lam1, lam2 = _resolve_lambdas(args, A, b)
    problem = ProblemData(A=A, b=b, lam1=lam1, lam2=lam2)
    x = read_solution(args.sol)
    if x.shape[0] != problem.n:
        raise ConfigError(f"solution has {x.shape[0]} entries, expected {problem.n}")
    eta = kkt_residual(problem, x)
    obj = primal_objective(problem, x)
    print(f"eta={eta:.6e} obj={obj:.9e}")
    return 0


def _cmd_gen(args):
    A, b, _ = generate_synthetic(args.m, args.n, n_blocks=args.blocks,
                                 noise_sd=args.noise, density=args.density,
                                 seed=args.seed)
    if args.format == "csv":
        write_csv(A, b, args.out)
    else:
        write_libsvm(A, b, args.out)
    print(f"wrote {args.m}x{args.n} instance to {args.out}")
    return 0


def cli_main(argv=None):
    """Entry point; returns the process exit code.

    0 on success, 2 on configuration or data errors, 3 when a solver
    finishes without reaching its target.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    _apply_thread_cap()
    handlers = {
        "solve": _cmd_solve,
        "solve-constrained": _cmd_solve_constrained,
        "bench": _cmd_bench,
        "check": _cmd_check,
        "gen": _cmd_gen,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, LibsvmFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():  # console script hook
    sys.exit(cli_main())
