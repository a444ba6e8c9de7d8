"""Augmented Lagrangian outer loop with semismooth Newton inner solves.

The dual variable is driven by the inner Newton solver; the primal iterate
is the prox of the shifted point and doubles as the multiplier. Inner
accuracy follows the classical summable-sequence rules, so the outer loop
inherits the usual global and asymptotic convergence guarantees while the
stopping decision itself is made on the relative KKT residual of the primal
problem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linops import apply_B
from .prox import fused_prox, penalty_value
from .ssn import SsnParams, ssn_solve

__all__ = [
    "AlmParams",
    "SolveReport",
    "ssnal_solve",
    "kkt_residual",
    "primal_objective",
    "sigma_schedule",
    "nnz_estimate",
]

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"
TIME_LIMIT = "TimeLimit"
STALLED = "Stalled"


def _default_eps(k):
    return 0.5 ** k


def _default_delta(k):
    return 0.5 ** k


def _default_delta_prime(k):
    return 1.0 / (k + 1.0)


@dataclass
class AlmParams:
    """Outer loop configuration.

    The three sequence rules control inner accuracy: an absolute summable
    sequence plus two rules proportional to the primal step length, all
    divided by (the square root of) the penalty parameter.
    """

    sigma0: float = 1.0
    sigma_growth: float = 3.0
    sigma_max: float = 1e6
    kkt_tol: float = 1e-6
    max_outer: int = 100
    time_limit: float | None = None
    eps_fn: Callable[[int], float] = _default_eps
    delta_fn: Callable[[int], float] = _default_delta
    delta_prime_fn: Callable[[int], float] = _default_delta_prime
    gnorm_floor: float = 1e-12
    keep_trace: bool = True
    ssn: SsnParams = field(default_factory=SsnParams)


@dataclass
class SolveReport:
    """Common result record shared by every solver in the package."""

    solver: str
    status: str
    eta: float
    primal_obj: float
    outer_iters: int
    ssn_iters: int = 0
    cg_iters: int = 0
    nnz_x: int = 0
    nnz_bx: int = 0
    wall_time_s: float = 0.0
    dual_quad: float = float("nan")
    sigma_final: float = float("nan")
    trace: list = field(default_factory=list)


def kkt_residual(problem, x):
    """Relative KKT residual of the primal problem at ``x``.

    ``||x - Prox_p(x - A.T (A x - b))|| / (1 + ||x|| + ||A x - b||)``.
    Zero exactly at solutions; every solver stops on this metric.
    """
    eta, _, _ = _kkt_parts(problem, x)
    return eta


def _kkt_parts(problem, x):
    A, b = problem.A, problem.b
    r = A.mat_vec(x) - b
    grad = A.rmat_vec(r)
    px = fused_prox(x - grad, problem.lam1, problem.lam2).x
    eta = float(np.linalg.norm(x - px)) / (1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(r)))
    obj = 0.5 * float(r @ r) + penalty_value(x, problem.lam1, problem.lam2)
    return eta, obj, r


def primal_objective(problem, x):
    """Objective value ``0.5 ||Ax - b||^2 + p(x)``."""
    r = problem.A.mat_vec(x) - problem.b
    return 0.5 * float(r @ r) + penalty_value(x, problem.lam1, problem.lam2)


def sigma_schedule(prev_sigma, growth, sigma_max):
    """Geometric penalty growth, capped."""
    return min(sigma_max, growth * prev_sigma)


def nnz_estimate(y):
    """Smallest k whose largest k magnitudes hold 99.9 percent of the mass."""
    y = np.asarray(y, dtype=np.float64)
    total = np.abs(y).sum()
    if total == 0.0 or y.size == 0:
        return 0
    mags = np.sort(np.abs(y))[::-1]
    return int(np.searchsorted(np.cumsum(mags), 0.999 * total) + 1)


def ssnal_solve(problem, params=None, x0=None, y0=None):
    """Run the augmented Lagrangian method on a fused lasso problem.

    Parameters
    ----------
    problem : ProblemData
    params : AlmParams, optional
    x0, y0 : ndarray, optional
        Warm starts for the primal and dual iterates, default zero.

    Returns
    -------
    (x, y, SolveReport)
    """
    if params is None:
        params = AlmParams()
    n, m = problem.n, problem.m
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    y = np.zeros(m) if y0 is None else np.array(y0, dtype=np.float64)
    sigma = params.sigma0
    floor = params.gnorm_floor * (1.0 + float(np.linalg.norm(problem.b)))
    t0 = time.perf_counter()
    status = MAX_ITER
    eta = float("inf")
    obj = float("nan")
    total_ssn = 0
    total_cg = 0
    trace = []
    outer = 0

    for k in range(params.max_outer):
        eps_k = params.eps_fn(k)
        delta_k = params.delta_fn(k)
        dp_k = params.delta_prime_fn(k)
        x_prev = x
        sqrt_sigma = np.sqrt(sigma)

        def rule(gnorm, pr, _eps=eps_k, _d=delta_k, _dp=dp_k, _s=sigma, _ss=sqrt_sigma, _xp=x_prev):
            dx = float(np.linalg.norm(pr.x - _xp))
            bound = min(_eps / _ss, (_d / _ss) * dx, (_dp / _s) * dx)
            return gnorm <= max(bound, floor)

        y, st = ssn_solve(problem, x_prev, sigma, y0=y, params=params.ssn, stop_rule=rule)
        x = st.prox.x
        total_ssn += st.iterations
        total_cg += st.cg_iters
        outer = k + 1
        eta, obj, _ = _kkt_parts(problem, x)
        if params.keep_trace:
            gnorm = float(np.linalg.norm(st.grad))
            dx = float(np.linalg.norm(x - x_prev))
            trace.append({
                "k": k,
                "sigma": sigma,
                "gnorm": gnorm,
                "step_norm": dx,
                "eps_k": eps_k,
                "delta_k": delta_k,
                "delta_prime_k": dp_k,
                "crit_A": bool(gnorm <= eps_k / sqrt_sigma),
                "crit_B1": bool(gnorm <= (delta_k / sqrt_sigma) * dx),
                "crit_B2": bool(gnorm <= (dp_k / sigma) * dx),
                "ssn_iters": st.iterations,
                "cg_iters": st.cg_iters,
                "eta": eta,
                "obj": obj,
            })
        if eta <= params.kkt_tol:
            status = OPTIMAL
            break
        if st.stalled:
            status = STALLED
            break
        if params.time_limit is not None and time.perf_counter() - t0 > params.time_limit:
            status = TIME_LIMIT
            break
        sigma = sigma_schedule(sigma, params.sigma_growth, params.sigma_max)

    wall = time.perf_counter() - t0
    report = SolveReport(
        solver="ssnal",
        status=status,
        eta=eta,
        primal_obj=obj if np.isfinite(obj) else primal_objective(problem, x),
        outer_iters=outer,
        ssn_iters=total_ssn,
        cg_iters=total_cg,
        nnz_x=nnz_estimate(x),
        nnz_bx=nnz_estimate(apply_B(x)) if n > 1 else 0,
        wall_time_s=wall,
        dual_quad=0.5 * float(y @ y) + float(y @ problem.b),
        sigma_final=sigma,
        trace=trace,
    )
    return x, y, report
