"""Proximal maps for the fused lasso penalty.

The penalty is ``p(x) = lam1 * ||x||_1 + lam2 * ||Bx||_1`` with B the first
difference operator. Its prox factors exactly: run the total variation prox
first, then soft threshold the result componentwise. The TV prox itself is
computed exactly by a forward-backward dynamic programming pass with no
iteration tolerance, O(n) amortized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

__all__ = [
    "ProxResult",
    "soft_threshold",
    "tv_prox",
    "recover_tv_dual",
    "fused_prox",
    "fused_prox_scaled",
    "conjugate_prox",
    "penalty_value",
]


@dataclass(frozen=True)
class ProxResult:
    """Output bundle of the fused lasso prox.

    Attributes
    ----------
    x : ndarray
        The prox point.
    x_tv : ndarray
        Intermediate total variation prox (before soft thresholding).
    z : ndarray
        Dual vector of the TV stage, shape (n-1,). Empty when lam2 == 0
        or n == 1, where the TV stage is the identity.
    p_val : float
        Penalty value at ``x``.
    """

    x: np.ndarray
    x_tv: np.ndarray
    z: np.ndarray
    p_val: float


def soft_threshold(v, t):
    """Componentwise shrinkage ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@njit(cache=True)
def _tv_dp(y, lam, x):
    """Exact TV prox; writes the solution into ``x``.

    Forward pass: maintain the derivative of the best-cost-so-far function
    as a sorted knot list with slope/intercept deltas. Each sample adds a
    unit-slope affine term and clips the derivative to [-lam, lam]; the clip
    trims dead knots off both ends and pushes one new knot per side, so the
    total work is O(n). Backward pass: the minimizer of the final cost is
    clamped through the stored clip knots.
    """
    n = y.shape[0]
    if n == 1:
        x[0] = y[0]
        return
    kx = np.empty(2 * n)
    ka = np.empty(2 * n)
    kb = np.empty(2 * n)
    tm = np.empty(n - 1)
    tp = np.empty(n - 1)
    l = n - 1
    r = n
    tm[0] = y[0] - lam
    tp[0] = y[0] + lam
    kx[l] = tm[0]
    kx[r] = tp[0]
    ka[l] = 1.0
    kb[l] = lam - y[0]
    ka[r] = -1.0
    kb[r] = lam + y[0]
    for i in range(1, n - 1):
        # crossing of the updated derivative with -lam, walking rightward;
        # (alo, blo) accumulates the piece left of knot lo
        alo = 1.0
        blo = -y[i] - lam
        lo = l
        while lo <= r and alo * kx[lo] + blo < -lam:
            alo += ka[lo]
            blo += kb[lo]
            lo += 1
        tmi = (-lam - blo) / alo
        # crossing with +lam, walking leftward over negated pieces
        ahi = -1.0
        bhi = y[i] - lam
        hi = r
        while hi >= lo and ahi * kx[hi] + bhi < -lam:
            ahi += ka[hi]
            bhi += kb[hi]
            hi -= 1
        tpi = (lam + bhi) / (-ahi)
        tm[i] = tmi
        tp[i] = tpi
        l = lo - 1
        r = hi + 1
        kx[l] = tmi
        ka[l] = alo
        kb[l] = blo + lam
        kx[r] = tpi
        ka[r] = ahi
        kb[r] = bhi + lam
    # final sample: locate the unconstrained minimizer instead of clipping
    alo = 1.0
    blo = -y[n - 1] - lam
    lo = l
    while lo <= r and alo * kx[lo] + blo < 0.0:
        alo += ka[lo]
        blo += kb[lo]
        lo += 1
    x[n - 1] = -blo / alo
    for i in range(n - 2, -1, -1):
        if x[i + 1] < tm[i]:
            x[i] = tm[i]
        elif x[i + 1] > tp[i]:
            x[i] = tp[i]
        else:
            x[i] = x[i + 1]


def tv_prox(v, t):
    """Prox of ``t * ||Bx||_1``, the 1D total variation denoiser.

    Parameters
    ----------
    v : array_like
        Input signal.
    t : float
        Nonnegative weight on the total variation term.

    Returns
    -------
    ndarray
        The unique minimizer of ``0.5 * ||x - v||^2 + t * ||Bx||_1``.
    """
    if t < 0:
        raise ValueError("tv weight must be nonnegative")
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a vector")
    n = v.shape[0]
    if n <= 1 or t == 0.0:
        return v.copy()
    x = np.empty(n)
    _tv_dp(v, float(t), x)
    return x


def recover_tv_dual(v, x_tv):
    """Dual vector of the TV prox, ``z = cumsum(v - x_tv)`` over the first
    n-1 entries. Satisfies ``apply_Bt(z) == v - x_tv`` up to rounding."""
    v = np.asarray(v, dtype=np.float64)
    x_tv = np.asarray(x_tv, dtype=np.float64)
    if v.shape != x_tv.shape:
        raise ValueError("shape mismatch")
    n = v.shape[0]
    if n <= 1:
        return np.zeros(0)
    return np.cumsum(v - x_tv)[: n - 1]


def penalty_value(x, lam1, lam2):
    """Evaluate ``lam1 * ||x||_1 + lam2 * ||Bx||_1``."""
    x = np.asarray(x, dtype=np.float64)
    val = lam1 * np.abs(x).sum()
    if x.shape[0] > 1 and lam2 != 0.0:
        val += lam2 * np.abs(x[:-1] - x[1:]).sum()
    return float(val)


def fused_prox(v, lam1, lam2):
    """Prox of the fused lasso penalty at ``v``.

    Runs the TV stage at weight ``lam2``, recovers its dual vector, then
    soft thresholds at ``lam1``. When ``lam2 == 0`` or the input is a
    scalar signal the TV stage is the identity and the dual is empty.

    Returns
    -------
    ProxResult
        Prox point with the TV intermediate, its dual, and the penalty
        value at the prox point.
    """
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalty weights must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    if lam2 == 0.0 or n <= 1:
        x_tv = v.copy()
        z = np.zeros(0)
    else:
        x_tv = tv_prox(v, lam2)
        z = recover_tv_dual(v, x_tv)
    x = soft_threshold(x_tv, lam1) if lam1 > 0 else x_tv.copy()
    return ProxResult(x=x, x_tv=x_tv, z=z, p_val=penalty_value(x, lam1, lam2))


def fused_prox_scaled(v, t, lam1, lam2):
    """Prox of ``t * p`` at ``v``, identical to ``fused_prox(v, t*lam1, t*lam2)``."""
    if t < 0:
        raise ValueError("scale must be nonnegative")
    return fused_prox(v, t * lam1, t * lam2)


def conjugate_prox(v, t, lam1, lam2):
    """Prox of the conjugate penalty, ``Prox_{p*/t}(v)``.

    Computed through the Moreau identity:
    ``Prox_{p*/t}(v) = (t*v - Prox_{t*p}(t*v)) / t``.
    """
    if t <= 0:
        raise ValueError("scale must be positive")
    v = np.asarray(v, dtype=np.float64)
    w = t * v
    return (w - fused_prox_scaled(w, t, lam1, lam2).x) / t
