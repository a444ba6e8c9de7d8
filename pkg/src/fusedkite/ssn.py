"""Semismooth Newton solver for the inner augmented Lagrangian subproblem.

Each outer step minimizes a continuously differentiable convex function of
the dual variable y whose gradient involves the fused lasso prox. Newton
systems have the form ``(I + sigma * A M A.T) d = -g`` with M the structured
prox Jacobian; the solver picks between two low-rank inversion routes, a
dense factorization, and conjugate gradients, depending on the active set
sizes. The active-set split makes every route cost a small multiple of the
surviving columns rather than the full problem size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .jacobian import build_jacobian, jacobian_mat_vec
from .prox import fused_prox_scaled

__all__ = [
    "SsnParams",
    "SsnStats",
    "NewtonSystem",
    "NewtonInfo",
    "psi_value",
    "grad_psi",
    "choose_strategy",
    "build_newton_system",
    "solve_newton",
    "line_search",
    "conjugate_gradient",
    "ssn_solve",
    "FULL_M",
    "SMW_RB",
    "SMW_AB",
    "CG",
]

FULL_M = "full_m"
SMW_RB = "smw_rb"
SMW_AB = "smw_ab"
CG = "cg"


@dataclass
class SsnParams:
    """Tuning knobs of the inner Newton solver."""

    mu_ls: float = 1e-4          # Armijo slope fraction, in (0, 1/2)
    delta_ls: float = 0.5        # backtracking factor
    eta_bar: float = 0.5         # cap on the Newton residual tolerance
    tau: float = 0.5             # residual exponent: tol = min(eta_bar, ||g||^(1+tau))
    max_iter: int = 50
    max_backtracks: int = 30
    cg_max_iter: int = 500
    c1: float = 1.0 / 3.0        # low-rank route threshold relative to m
    m_dense_cap: int = 4000      # largest m for the dense route
    strategy: str | None = None  # force a strategy, mainly for tests


@dataclass
class SsnStats:
    iterations: int = 0
    cg_iters: int = 0
    gnorms: list = field(default_factory=list)
    strategies: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    prox: object = None
    grad: object = None
    psi: float = float("nan")


@dataclass
class NewtonSystem:
    """One Newton system ``(I + sigma A M A.T) d = -g`` with cached blocks."""

    problem: object
    sigma: float
    rep: object
    strategy: str
    A_beta: np.ndarray | None = None
    AU: np.ndarray | None = None

    def mat_vec(self, d):
        """Exact product with the system matrix, in operator form."""
        A = self.problem.A
        t = A.rmat_vec(d)
        s = jacobian_mat_vec(self.rep, t)
        return d + self.sigma * A.mat_vec(s)


@dataclass
class NewtonInfo:
    strategy: str
    cg_iters: int = 0
    residual: float = 0.0
    converged: bool = True
    fallback: bool = False


def psi_value(problem, y, x_tilde, sigma):
    """Inner objective value, evaluated through the Moreau envelope.

    With ``w = x_tilde - sigma * A.T y`` and ``xp`` the prox of the scaled
    penalty at w, the value is
    ``0.5||y||^2 + <y, b> + (||w||^2 - ||x_tilde||^2 - ||xp - w||^2)/(2 sigma) - p(xp)``.
    """
    A, b = problem.A, problem.b
    w = x_tilde - sigma * A.rmat_vec(y)
    pr = fused_prox_scaled(w, sigma, problem.lam1, problem.lam2)
    return _psi_from_parts(y, b, w, pr, sigma, float(x_tilde @ x_tilde))


def _psi_from_parts(y, b, w, pr, sigma, xt_sq):
    d = pr.x - w
    return (0.5 * float(y @ y) + float(y @ b)
            + (float(w @ w) - xt_sq - float(d @ d)) / (2.0 * sigma)
            - pr.p_val / sigma)


def grad_psi(problem, y, x_tilde, sigma):
    """Gradient of the inner objective and the prox it was built from.

    ``g = y + b - A @ Prox_{sigma p}(x_tilde - sigma A.T y)``. The constant
    data term belongs to the dual objective's linear part; dropping it would
    desynchronize the gradient from :func:`psi_value`.
    """
    A, b = problem.A, problem.b
    w = x_tilde - sigma * A.rmat_vec(y)
    pr = fused_prox_scaled(w, sigma, problem.lam1, problem.lam2)
    g = y + b - A.mat_vec(pr.x)
    return g, pr


def choose_strategy(m, n_alpha, n_beta, r, params):
    """Pick the Newton system route from the active set sizes."""
    if params.strategy is not None:
        return params.strategy
    if r + n_beta <= params.c1 * m:
        return SMW_RB
    if n_alpha + n_beta <= params.c1 * m:
        return SMW_AB
    if m <= params.m_dense_cap:
        return FULL_M
    return CG


def build_newton_system(problem, sigma, rep, params):
    """Assemble the cached column blocks the chosen route needs."""
    m = problem.m
    strategy = choose_strategy(m, rep.alpha.shape[0], rep.beta.shape[0], rep.r, params)
    system = NewtonSystem(problem=problem, sigma=sigma, rep=rep, strategy=strategy)
    if strategy != CG:
        A = problem.A
        system.A_beta = A.gather_cols_dense(rep.beta)
        if rep.r > 0:
            # averaging columns restricted to surviving rows
            theta = rep.flags.theta
            starts = rep.alpha[rep.ucol_lo]
            ends = rep.alpha[rep.ucol_hi - 1] + 1
            system.AU = A.block_sum_cols(starts, ends - starts, rep.ucol_weights, mask=theta)
        else:
            system.AU = np.zeros((m, 0), order="F")
    return system


def _utilde_dense(rep):
    """Dense alpha-by-r averaging factor (only for the two-sided route)."""
    ut = np.zeros((rep.alpha.shape[0], rep.r), order="F")
    for j in range(rep.r):
        ut[rep.ucol_lo[j]:rep.ucol_hi[j], j] = rep.ucol_weights[j]
    return ut


def solve_newton(system, g, tol, params):
    """Solve the Newton system to residual norm at most ``tol``.

    The tolerance is floored at machine scale relative to ``||g||``. Direct
    routes fall back to conjugate gradients when the factorization fails or
    leaves too large a residual; ``info.converged`` reports the outcome
    honestly either way.
    """
    info = NewtonInfo(strategy=system.strategy)
    gnorm = float(np.linalg.norm(g))
    tol_eff = max(tol, 1e-14 * (1.0 + gnorm))
    d = None
    if system.strategy != CG:
        try:
            d = _solve_direct(system, g, system.sigma)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            d = None
        if d is not None:
            info.residual = float(np.linalg.norm(system.mat_vec(d) + g))
            if info.residual <= tol_eff:
                return d, info
        info.fallback = True
    d, iters, _ = conjugate_gradient(system.mat_vec, -g, x0=d, tol=tol_eff,
                                     max_iter=params.cg_max_iter)
    info.cg_iters = iters
    info.residual = float(np.linalg.norm(system.mat_vec(d) + g))
    info.converged = bool(info.residual <= tol_eff * (1.0 + 1e-8))
    return d, info


def _solve_direct(system, g, sigma):
    rep = system.rep
    A_beta, AU = system.A_beta, system.AU
    nb, r = A_beta.shape[1], AU.shape[1]
    if system.strategy == FULL_M or (system.strategy in (SMW_RB, SMW_AB) and nb + r == 0):
        if nb + r == 0:
            return -g
        if system.strategy == FULL_M:
            V = sigma * (A_beta @ A_beta.T + AU @ AU.T)
            V[np.diag_indices_from(V)] += 1.0
            c, low = sla.cho_factor(V, lower=True, check_finite=False)
            return sla.cho_solve((c, low), -g, check_finite=False)
        return -g
    if system.strategy == SMW_RB:
        W = np.hstack([A_beta, AU])
        C = W.T @ W
        C[np.diag_indices_from(C)] += 1.0 / sigma
        c, low = sla.cho_factor(C, lower=True, check_finite=False)
        return -g + W @ sla.cho_solve((c, low), W.T @ g, check_finite=False)
    if system.strategy == SMW_AB:
        A_alpha = system.problem.A.gather_cols_dense(rep.alpha)
        ut = _utilde_dense(rep)
        W1 = np.hstack([A_beta, AU @ ut.T])
        W2 = np.hstack([A_beta, A_alpha])
        C = W2.T @ W1
        C[np.diag_indices_from(C)] += 1.0 / sigma
        lu, piv = sla.lu_factor(C, check_finite=False)
        return -g + W1 @ sla.lu_solve((lu, piv), W2.T @ g, check_finite=False)
    raise ValueError(f"unknown strategy {system.strategy!r}")


def conjugate_gradient(mat_vec, rhs, x0=None, tol=1e-10, max_iter=500):
    """Plain conjugate gradients on a symmetric positive definite operator.

    Returns the iterate, the iteration count, and the final recursion
    residual norm. ``tol`` is absolute.
    """
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    r = rhs - mat_vec(x)
    p = r.copy()
    rs = float(r @ r)
    it = 0
    while it < max_iter and math.sqrt(rs) > tol:
        Ap = mat_vec(p)
        denom = float(p @ Ap)
        if denom <= 0.0:
            break
        a = rs / denom
        x += a * p
        r -= a * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    return x, it, math.sqrt(rs)


def line_search(eval_psi, y, d, slope, psi0, params, alpha0=1.0):
    """Armijo backtracking along d, starting from step ``alpha0``.

    ``eval_psi`` maps a trial point to ``(psi, payload)``. Returns the
    accepted step together with the trial's payload; ``accepted`` is False
    when the backtrack budget runs out, which callers treat as a stall.
    """
    alpha = alpha0
    trial = payload = None
    psi_t = float("nan")
    for _ in range(params.max_backtracks + 1):
        trial = y + alpha * d
        psi_t, payload = eval_psi(trial)
        if psi_t <= psi0 + params.mu_ls * alpha * slope:
            return alpha, trial, psi_t, payload, True
        alpha *= params.delta_ls
    return alpha, trial, psi_t, payload, False


def ssn_solve(problem, x_tilde, sigma, y0=None, params=None, stop_rule=None, gtol=1e-8):
    """Minimize the inner objective over y.

    Parameters
    ----------
    problem : ProblemData
    x_tilde : ndarray
        Outer primal center.
    sigma : float
        Positive penalty parameter.
    y0 : ndarray, optional
        Warm start, defaults to zero.
    params : SsnParams, optional
    stop_rule : callable, optional
        ``stop_rule(gnorm, prox) -> bool``; when omitted the solver stops at
        ``gnorm <= gtol``.
    gtol : float
        Fallback gradient tolerance when no rule is given.

    Returns
    -------
    (y, SsnStats)
        The final iterate and bookkeeping, including the prox at the final
        point so callers can reuse it as the next primal iterate.
    """
    if params is None:
        params = SsnParams()
    if stop_rule is None:
        stop_rule = lambda gnorm, prox: gnorm <= gtol
    A, b = problem.A, problem.b
    y = np.zeros(problem.m) if y0 is None else np.array(y0, dtype=np.float64)
    xt_sq = float(x_tilde @ x_tilde)

    def evaluate(y_cur):
        w = x_tilde - sigma * A.rmat_vec(y_cur)
        pr = fused_prox_scaled(w, sigma, problem.lam1, problem.lam2)
        return w, pr

    stats = SsnStats()
    w, pr = evaluate(y)
    g = y + b - A.mat_vec(pr.x)
    gnorm = float(np.linalg.norm(g))
    psi = _psi_from_parts(y, b, w, pr, sigma, xt_sq)
    stats.gnorms.append(gnorm)

    for _ in range(params.max_iter):
        if stop_rule(gnorm, pr):
            stats.converged = True
            break
        rep = build_jacobian(pr, sigma * problem.lam1, sigma * problem.lam2)
        system = build_newton_system(problem, sigma, rep, params)
        tol_d = min(params.eta_bar, gnorm ** (1.0 + params.tau))
        d, info = solve_newton(system, g, tol_d, params)
        stats.cg_iters += info.cg_iters
        stats.strategies.append(info.strategy)
        slope = float(g @ d)
        if not np.isfinite(slope) or slope >= 0.0:
            d = -g
            slope = -gnorm * gnorm

        def eval_psi(y_trial):
            w_t, pr_t = evaluate(y_trial)
            return _psi_from_parts(y_trial, b, w_t, pr_t, sigma, xt_sq), (w_t, pr_t)

        # Try the unit step first. Near the solution the predicted descent
        # sinks below the rounding noise of the objective and Armijo alone
        # would reject exactly the fast steps, so a step that at least
        # halves the gradient norm is accepted on that evidence instead.
        y_new = y + d
        psi_new, payload = eval_psi(y_new)
        g_new = y_new + b - A.mat_vec(payload[1].x)
        gnorm_new = float(np.linalg.norm(g_new))
        alpha = 1.0
        if psi_new <= psi + params.mu_ls * slope:
            accepted = True
        elif (gnorm_new <= 0.5 * gnorm
              and psi_new <= psi + 1e-10 * (1.0 + abs(psi))):
            accepted = True
        else:
            alpha, y_new, psi_new, payload, accepted = line_search(
                eval_psi, y, d, slope, psi, params, alpha0=params.delta_ls)
            if accepted:
                g_new = y_new + b - A.mat_vec(payload[1].x)
                gnorm_new = float(np.linalg.norm(g_new))
        if not accepted:
            stats.stalled = True
            break
        y = y_new
        w, pr = payload
        psi = psi_new
        g = g_new
        gnorm = gnorm_new
        stats.iterations += 1
        stats.gnorms.append(gnorm)
        stats.step_sizes.append(alpha)
    else:
        stats.converged = stop_rule(gnorm, pr)

    stats.prox = pr
    stats.grad = g
    stats.psi = psi
    return y, stats
