"""Structured generalized Jacobian of the fused lasso prox.

At a prox point the Jacobian element used by the Newton solver factors as
``M = Theta @ Gamma`` where Theta is the 0-1 diagonal survivor mask of the
soft threshold stage and Gamma is the Jacobian of the TV stage. Gamma is
block diagonal: identity rows plus one constant averaging block per fused
group, so it is stored as a 0-1 vector ``h`` and a short list of weighted
group ranges. Products with M cost O(n); nothing n-by-n is ever formed
outside the small dense test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ActiveFlags",
    "BlockPartition",
    "JacobianRep",
    "classify_active",
    "partition_blocks",
    "build_gamma",
    "derive_index_sets",
    "build_jacobian",
    "jacobian_mat_vec",
    "dense_gamma_oracle",
    "default_tol_act",
]


@dataclass(frozen=True)
class ActiveFlags:
    """0-1 activity masks from a prox point.

    ``theta[i] == 1`` marks coordinates that survive the soft threshold.
    ``sigma[i] == 0`` marks difference coordinates whose dual is at the
    bound (the active set of the TV stage); ``sigma[i] == 1`` marks free
    duals strictly inside the bound.
    """

    theta: np.ndarray
    sigma: np.ndarray
    tol_act: float


@dataclass(frozen=True)
class BlockPartition:
    """Maximal constant runs of sigma, left to right.

    ``sizes[k]`` is the run length, ``is_free[k]`` is True for runs of
    ones (free duals, which become averaging blocks).
    """

    sizes: np.ndarray
    is_free: np.ndarray


@dataclass(frozen=True)
class JacobianRep:
    """O(n) representation of one generalized Jacobian element.

    ``h`` is the 0-1 diagonal of the identity part of Gamma. Each averaging
    block j covers rows ``u_starts[j] : u_starts[j] + u_sizes[j]`` with
    constant entry ``u_weights[j]**2``. ``alpha`` lists the surviving
    coordinates, ``beta`` the surviving coordinates on identity rows.
    The compressed factor columns (``ucol_*``) are the averaging columns
    restricted to alpha rows, with empty columns dropped; there are ``r``
    of them and ``ucol_lo/ucol_hi`` index into ``alpha``.
    """

    flags: ActiveFlags
    h: np.ndarray
    u_starts: np.ndarray
    u_sizes: np.ndarray
    u_weights: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    ucol_lo: np.ndarray
    ucol_hi: np.ndarray
    ucol_weights: np.ndarray
    r: int
    n: int


def default_tol_act(lam1, lam2):
    """Default classification tolerance, scaled to the penalty weights."""
    return 1e-11 * (1.0 + lam1 + lam2)


def classify_active(prox, lam1, lam2, tol_act=None):
    """Derive activity flags from a prox result.

    Ties are classified conservatively: a coordinate sitting exactly on the
    soft threshold boundary is treated as zeroed, and a dual exactly at the
    bound (or any difference with visible slope) is treated as active.

    Parameters
    ----------
    prox : ProxResult
        Output of :func:`fusedkite.prox.fused_prox` at the point of interest.
    lam1, lam2 : float
        Penalty weights the prox was taken at.
    tol_act : float, optional
        Classification tolerance; defaults to :func:`default_tol_act`.

    Returns
    -------
    ActiveFlags
    """
    if tol_act is None:
        tol_act = default_tol_act(lam1, lam2)
    x_tv = prox.x_tv
    n = x_tv.shape[0]
    theta = (np.abs(x_tv) > lam1 + tol_act).astype(np.uint8)
    if n <= 1:
        return ActiveFlags(theta=theta, sigma=np.zeros(0, dtype=np.uint8), tol_act=tol_act)
    if lam2 == 0.0:
        # TV stage is the identity: every dual is pinned, Gamma reduces to I
        return ActiveFlags(theta=theta, sigma=np.zeros(n - 1, dtype=np.uint8), tol_act=tol_act)
    z = prox.z
    at_bound = (lam2 - np.abs(z)) <= tol_act
    visible_jump = np.abs(x_tv[:-1] - x_tv[1:]) > tol_act
    sigma = (~(at_bound | visible_jump)).astype(np.uint8)
    return ActiveFlags(theta=theta, sigma=sigma, tol_act=tol_act)


def partition_blocks(sigma):
    """Split sigma into maximal constant runs."""
    sigma = np.asarray(sigma)
    if sigma.shape[0] == 0:
        return BlockPartition(sizes=np.zeros(0, dtype=np.intp), is_free=np.zeros(0, dtype=bool))
    change = np.flatnonzero(sigma[1:] != sigma[:-1])
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change + 1, [sigma.shape[0]]))
    return BlockPartition(sizes=(ends - starts).astype(np.intp), is_free=sigma[starts] == 1)


def build_gamma(partition):
    """Assemble the TV-stage Jacobian from a block partition.

    Returns
    -------
    h : ndarray
        0-1 identity diagonal, length n with n recovered from the partition.
    u_starts, u_sizes, u_weights : ndarray
        One averaging block per free run: a run of k free duals covers
        k + 1 coordinates with weight 1/sqrt(k + 1). Identity rows are the
        coordinates no averaging block claims.
    """
    sizes = partition.sizes
    n = int(sizes.sum()) + 1
    h = np.ones(n, dtype=np.uint8)
    starts, widths, weights = [], [], []
    pos = 0
    for k in range(sizes.shape[0]):
        if partition.is_free[k]:
            width = int(sizes[k]) + 1
            h[pos:pos + width] = 0
            starts.append(pos)
            widths.append(width)
            weights.append(1.0 / np.sqrt(width))
        pos += int(sizes[k])
    return (
        h,
        np.asarray(starts, dtype=np.intp),
        np.asarray(widths, dtype=np.intp),
        np.asarray(weights, dtype=np.float64),
    )


def derive_index_sets(theta, h, u_starts, u_sizes, u_weights):
    """Index sets feeding the Newton system assembly.

    ``alpha`` collects the surviving coordinates, ``beta`` the surviving
    coordinates on identity rows (these contribute rank-one column terms).
    Averaging columns are restricted to alpha rows; columns with no
    surviving row are dropped. The returned lo/hi pairs locate each kept
    column's rows inside ``alpha``.
    """
    theta = np.asarray(theta)
    alpha = np.flatnonzero(theta).astype(np.intp)
    beta = alpha[np.asarray(h)[alpha] == 1]
    lo_all = np.searchsorted(alpha, u_starts)
    hi_all = np.searchsorted(alpha, u_starts + u_sizes)
    keep = hi_all > lo_all
    return alpha, beta, lo_all[keep], hi_all[keep], u_weights[keep], int(keep.sum())


def build_jacobian(prox, lam1, lam2, tol_act=None):
    """Classify, partition, and assemble in one call."""
    flags = classify_active(prox, lam1, lam2, tol_act)
    part = partition_blocks(flags.sigma)
    h, u_starts, u_sizes, u_weights = build_gamma(part)
    alpha, beta, lo, hi, w, r = derive_index_sets(flags.theta, h, u_starts, u_sizes, u_weights)
    return JacobianRep(
        flags=flags,
        h=h,
        u_starts=u_starts,
        u_sizes=u_sizes,
        u_weights=u_weights,
        alpha=alpha,
        beta=beta,
        ucol_lo=lo,
        ucol_hi=hi,
        ucol_weights=w,
        r=r,
        n=h.shape[0],
    )


def jacobian_mat_vec(rep, w):
    """Apply M = Theta @ Gamma to a vector in O(n)."""
    w = np.asarray(w, dtype=np.float64)
    out = np.asarray(rep.h, dtype=np.float64) * w
    for j in range(rep.u_starts.shape[0]):
        s = rep.u_starts[j]
        e = s + rep.u_sizes[j]
        out[s:e] += (rep.u_weights[j] ** 2) * w[s:e].sum()
    out[rep.flags.theta == 0] = 0.0
    return out


def dense_gamma_oracle(sigma, n_max=60):
    """Dense TV-stage Jacobian through the pseudoinverse formula.

    Small-dimension reference only: builds the difference operator densely
    and evaluates ``I - B.T @ pinv(S B B.T S) @ B`` with S = diag(sigma).
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    n = sigma.shape[0] + 1
    if n > n_max:
        raise ValueError(f"dense oracle capped at n = {n_max}")
    if n == 1:
        return np.eye(1)
    B = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    B[idx, idx] = 1.0
    B[idx, idx + 1] = -1.0
    S = np.diag(sigma)
    core = np.linalg.pinv(S @ B @ B.T @ S)
    return np.eye(n) - B.T @ core @ B
