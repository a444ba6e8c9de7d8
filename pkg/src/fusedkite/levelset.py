"""Level-set bisection for residual-constrained fused lasso problems.

Solves ``min p(x) subject to ||Ax - b|| <= delta`` by rootfinding on the
value function ``phi(mu) = ||A x(mu) - b||`` of the penalized problem with
weights scaled by mu. phi is nondecreasing in mu and reaches ``||b||`` once
mu passes the threshold where zero becomes optimal, so a bisection bracket
on [0, mu_max] always exists when the target is attainable.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .alm import AlmParams, SolveReport, nnz_estimate, ssnal_solve
from .linops import apply_B
from .problem import ProblemData

__all__ = ["mu_upper_bound", "phi_eval", "levelset_solve"]

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"


def mu_upper_bound(problem):
    """Smallest certified weight scale at which x = 0 is optimal.

    Bounded by ``||A.T b||_inf / lam1``; requires a positive l1 weight.
    The pure total variation penalty has no such finite certificate here,
    so constrained mode rejects it.
    """
    if problem.lam1 <= 0.0:
        raise ValueError("constrained mode requires a positive l1 weight")
    atb = problem.A.rmat_vec(problem.b)
    return float(np.max(np.abs(atb))) / problem.lam1 if atb.size else 0.0


def phi_eval(problem, mu, x0=None, y0=None, inner_tol=1e-8, alm_params=None):
    """Residual norm of the penalized solution at weight scale ``mu``.

    Solves the penalty problem with weights ``(mu * lam1, mu * lam2)`` to
    the fixed inner tolerance and returns ``(phi, x, y, report)``. At
    ``mu = 0`` this is a pure least squares solve through the same
    machinery.
    """
    if mu < 0.0:
        raise ValueError("mu must be nonnegative")
    if alm_params is None:
        alm_params = AlmParams()
    alm_params = replace(alm_params, kkt_tol=inner_tol, keep_trace=False)
    sub = ProblemData(A=problem.A, b=problem.b,
                      lam1=mu * problem.lam1, lam2=mu * problem.lam2)
    x, y, report = ssnal_solve(sub, params=alm_params, x0=x0, y0=y0)
    phi = float(np.linalg.norm(problem.A.mat_vec(x) - problem.b))
    return phi, x, y, report


def levelset_solve(problem, delta, tol=1e-6, max_iter=60, inner_tol=1e-8,
                   alm_params=None):
    """Bisection on the value function to hit the residual target.

    Parameters
    ----------
    problem : ProblemData
        ``lam1`` and ``lam2`` fix the shape of the penalty; the level-set
        scale multiplies both.
    delta : float
        Residual target, must be attainable: at least the unregularized
        least squares residual.
    tol : float
        Stop when ``|phi - delta| / max(1, delta) <= tol``.
    max_iter : int
        Bisection budget.

    Returns
    -------
    (x, mu, SolveReport)
    """
    if delta < 0.0:
        raise ValueError("delta must be nonnegative")
    mu_hi = mu_upper_bound(problem)
    t0 = time.perf_counter()
    norm_b = float(np.linalg.norm(problem.b))
    n = problem.n
    if delta >= norm_b:
        # zero is feasible and has the least possible penalty
        report = SolveReport(
            solver="ssnal-lsm", status=OPTIMAL, eta=0.0, primal_obj=0.0,
            outer_iters=0, nnz_x=0, nnz_bx=0,
            wall_time_s=time.perf_counter() - t0)
        return np.zeros(n), mu_hi, report

    phi0, x, y, rep0 = phi_eval(problem, 0.0, inner_tol=inner_tol,
                                alm_params=alm_params)
    total_ssn, total_cg, total_inner = rep0.ssn_iters, rep0.cg_iters, rep0.outer_iters
    if phi0 > delta + tol * max(1.0, delta):
        raise ValueError("delta below attainable residual")

    trace = []
    status = MAX_ITER
    mu = 0.0
    phi = phi0
    eta_ls = abs(phi - delta) / max(1.0, delta)
    lo, hi = 0.0, mu_hi
    if eta_ls > tol:
        for k in range(1, max_iter + 1):
            mu = 0.5 * (lo + hi)
            phi, x, y, rep = phi_eval(problem, mu, x0=x, y0=y,
                                      inner_tol=inner_tol, alm_params=alm_params)
            total_ssn += rep.ssn_iters
            total_cg += rep.cg_iters
            total_inner += rep.outer_iters
            eta_ls = abs(phi - delta) / max(1.0, delta)
            trace.append({"k": k, "mu": mu, "phi": phi,
                          "inner_outer_iters": rep.outer_iters, "inner_eta": rep.eta})
            if eta_ls <= tol:
                status = OPTIMAL
                break
            if phi > delta:
                hi = mu
            else:
                lo = mu
    else:
        status = OPTIMAL

    r = problem.A.mat_vec(x) - problem.b
    pen = problem.lam1 * np.abs(x).sum()
    if n > 1:
        pen += problem.lam2 * np.abs(apply_B(x)).sum()
    report = SolveReport(
        solver="ssnal-lsm",
        status=status,
        eta=eta_ls,
        primal_obj=float(pen),
        outer_iters=len(trace),
        ssn_iters=total_ssn,
        cg_iters=total_cg,
        nnz_x=nnz_estimate(x),
        nnz_bx=nnz_estimate(apply_B(x)) if n > 1 else 0,
        wall_time_s=time.perf_counter() - t0,
        trace=trace,
    )
    return x, mu, report
