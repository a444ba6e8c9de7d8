"""First-order reference solvers: dual ADMM, its linearized variant, and an
accelerated proximal gradient method on the primal.

All three stop on the same relative KKT residual as the Newton solver, so
iteration counts and accuracy are directly comparable across methods.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .alm import SolveReport, _kkt_parts, nnz_estimate
from .linops import apply_B
from .prox import conjugate_prox, fused_prox
from .ssn import conjugate_gradient

__all__ = [
    "BaselineParams",
    "admm_solve",
    "ladmm_solve",
    "apg_solve",
    "power_method_norm",
]

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"
TIME_LIMIT = "TimeLimit"


@dataclass
class BaselineParams:
    sigma: float = 1.0            # ADMM penalty parameter
    step: float = 1.618           # multiplier step length
    tol: float = 1e-6             # target KKT residual
    max_iter: int = 20000
    time_limit: float | None = None
    eta_interval: int = 1         # residual check cadence
    cg_max_iter: int = 300        # inexact ADMM inner cap
    cg_tol_fn: object = None      # override: (k, rhs_norm) -> absolute tol
    restart: bool = False         # APG monotone restart
    lin_margin: float = 1.01      # linearized step safety factor
    power_tol: float = 1e-6
    power_max_iter: int = 5000
    power_seed: int = 0
    keep_trace: bool = False


def power_method_norm(A, tol=1e-6, max_iter=5000, seed=0):
    """Dominant eigenvalue of ``A.T A``, that is ``||A||_2^2``.

    Power iteration on whichever Gram operator is smaller, deterministic
    for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    use_rows = A.m <= A.n
    dim = A.m if use_rows else A.n

    def op(v):
        if use_rows:
            return A.mat_vec(A.rmat_vec(v))
        return A.rmat_vec(A.mat_vec(v))

    v = rng.standard_normal(dim)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        v = np.ones(dim)
        nv = np.linalg.norm(v)
    v /= nv
    lam = 0.0
    for _ in range(max_iter):
        w = op(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            return lam_new
        lam = lam_new
    return lam


def _finish(solver, status, problem, x, k, cg_total, t0, trace, eta, obj):
    return SolveReport(
        solver=solver,
        status=status,
        eta=eta,
        primal_obj=obj,
        outer_iters=k,
        ssn_iters=0,
        cg_iters=cg_total,
        nnz_x=nnz_estimate(x),
        nnz_bx=nnz_estimate(apply_B(x)) if problem.n > 1 else 0,
        wall_time_s=time.perf_counter() - t0,
        trace=trace,
    )


def admm_solve(problem, params=None, mode="exact", x0=None):
    """Dual ADMM with a 1.618 multiplier step.

    The dual split is ``min 0.5||y||^2 + <y, b> + p*(u)`` subject to
    ``A.T y + u = 0`` with the primal solution as multiplier. In exact mode
    the y update solves ``(I + sigma A A.T) y = A(x - sigma u) - b``
    through one cached Cholesky factorization; in inexact mode it runs
    warm-started conjugate gradients with a decaying relative tolerance.
    """
    if params is None:
        params = BaselineParams()
    if mode not in ("exact", "inexact"):
        raise ValueError("mode must be 'exact' or 'inexact'")
    A, b = problem.A, problem.b
    m, n = problem.m, problem.n
    sigma, step = params.sigma, params.step
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    y = np.zeros(m)
    u = np.zeros(n)
    t0 = time.perf_counter()
    factor = None
    if mode == "exact":
        try:
            K = sigma * A.gram_mm()
            K[np.diag_indices_from(K)] += 1.0
            factor = sla.cho_factor(K, lower=True, check_finite=False)
        except (MemoryError, np.linalg.LinAlgError, sla.LinAlgError) as exc:
            raise RuntimeError(
                "exact mode could not factor the m-by-m system; "
                "use mode='inexact'") from exc

    def sys_mv(v):
        return v + sigma * A.mat_vec(A.rmat_vec(v))

    trace = []
    cg_total = 0
    status = MAX_ITER
    eta, obj = float("inf"), float("nan")
    it = 0
    for k in range(1, params.max_iter + 1):
        it = k
        rhs = A.mat_vec(x - sigma * u) - b
        if mode == "exact":
            y = sla.cho_solve(factor, rhs, check_finite=False)
        else:
            if params.cg_tol_fn is not None:
                tol_k = params.cg_tol_fn(k, float(np.linalg.norm(rhs)))
            else:
                tol_k = min(0.1, 1.0 / k ** 1.5) * float(np.linalg.norm(rhs))
            y, cg_it, _ = conjugate_gradient(sys_mv, rhs, x0=y, tol=tol_k,
                                             max_iter=params.cg_max_iter)
            cg_total += cg_it
        aty = A.rmat_vec(y)
        u = conjugate_prox(x / sigma - aty, sigma, problem.lam1, problem.lam2)
        x = x - step * sigma * (aty + u)
        if k % params.eta_interval == 0 or k == params.max_iter:
            eta, obj, _ = _kkt_parts(problem, x)
            if params.keep_trace:
                trace.append({"k": k, "eta": eta, "obj": obj})
            if eta <= params.tol:
                status = OPTIMAL
                break
        if params.time_limit is not None and time.perf_counter() - t0 > params.time_limit:
            status = TIME_LIMIT
            break
    if not np.isfinite(obj):
        eta, obj, _ = _kkt_parts(problem, x)
    name = "admm" if mode == "exact" else "iadmm"
    return x, _finish(name, status, problem, x, it, cg_total, t0, trace, eta, obj)


def ladmm_solve(problem, params=None, x0=None):
    """Linearized variant: the y update is a single proximal step.

    The quadratic coupling is majorized at the previous y with curvature
    ``lin_margin * sigma * ||A||_2^2``, giving a closed-form update with no
    linear solve.
    """
    if params is None:
        params = BaselineParams()
    A, b = problem.A, problem.b
    m, n = problem.m, problem.n
    sigma, step = params.sigma, params.step
    L = power_method_norm(A, tol=params.power_tol, max_iter=params.power_max_iter,
                          seed=params.power_seed)
    tau = params.lin_margin * sigma * L
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    y = np.zeros(m)
    u = np.zeros(n)
    t0 = time.perf_counter()
    trace = []
    status = MAX_ITER
    eta, obj = float("inf"), float("nan")
    it = 0
    for k in range(1, params.max_iter + 1):
        it = k
        y = (tau * y + A.mat_vec(x - sigma * (A.rmat_vec(y) + u)) - b) / (1.0 + tau)
        aty = A.rmat_vec(y)
        u = conjugate_prox(x / sigma - aty, sigma, problem.lam1, problem.lam2)
        x = x - step * sigma * (aty + u)
        if k % params.eta_interval == 0 or k == params.max_iter:
            eta, obj, _ = _kkt_parts(problem, x)
            if params.keep_trace:
                trace.append({"k": k, "eta": eta, "obj": obj})
            if eta <= params.tol:
                status = OPTIMAL
                break
        if params.time_limit is not None and time.perf_counter() - t0 > params.time_limit:
            status = TIME_LIMIT
            break
    if not np.isfinite(obj):
        eta, obj, _ = _kkt_parts(problem, x)
    return x, _finish("ladmm", status, problem, x, it, 0, t0, trace, eta, obj)


def apg_solve(problem, params=None, x0=None):
    """Accelerated proximal gradient on the primal objective.

    Step size ``1/L`` with L a safety-margined power method estimate of
    ``||A||_2^2``. The optional monotone restart resets momentum whenever
    the objective increases; it is off by default.
    """
    if params is None:
        params = BaselineParams()
    A, b = problem.A, problem.b
    n = problem.n
    L = params.lin_margin * power_method_norm(
        A, tol=params.power_tol, max_iter=params.power_max_iter, seed=params.power_seed)
    if L <= 0.0:
        raise ValueError("design matrix must be nonzero")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    w = x.copy()
    t = 1.0
    t0 = time.perf_counter()
    trace = []
    status = MAX_ITER
    eta, obj = float("inf"), float("nan")
    obj_prev = float("inf")
    it = 0
    for k in range(1, params.max_iter + 1):
        it = k
        grad = A.rmat_vec(A.mat_vec(w) - b)
        x_new = fused_prox(w - grad / L, problem.lam1 / L, problem.lam2 / L).x
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = x_new + ((t - 1.0) / t_new) * (x_new - x)
        if params.restart:
            r_new = A.mat_vec(x_new) - b
            obj_new = 0.5 * float(r_new @ r_new) + problem.lam1 * np.abs(x_new).sum() \
                + problem.lam2 * np.abs(apply_B(x_new)).sum()
            if obj_new > obj_prev:
                t_new = 1.0
                w = x_new.copy()
            obj_prev = obj_new
        x = x_new
        t = t_new
        if k % params.eta_interval == 0 or k == params.max_iter:
            eta, obj, _ = _kkt_parts(problem, x)
            if params.keep_trace:
                trace.append({"k": k, "eta": eta, "obj": obj})
            if eta <= params.tol:
                status = OPTIMAL
                break
        if params.time_limit is not None and time.perf_counter() - t0 > params.time_limit:
            status = TIME_LIMIT
            break
    if not np.isfinite(obj):
        eta, obj, _ = _kkt_parts(problem, x)
    return x, _finish("apg", status, problem, x, it, 0, t0, trace, eta, obj)
