import numpy as np
import scipy.sparse as sp

from fusedkite import DesignMatrix, ProblemData


def piecewise_signal(n, cuts, values):
    x = np.zeros(n)
    bounds = [0] + list(cuts) + [n]
    for g, v in enumerate(values):
        x[bounds[g]:bounds[g + 1]] = v
    return x


def make_problem(seed=0, m=30, n=80, sparse=False, noise=0.05,
                 alpha1=1e-2, alpha2=1.0, lam1=None, lam2=None):
    """Random fused lasso instance with a piecewise-constant ground truth."""
    rng = np.random.default_rng(seed)
    if sparse:
        A = sp.random(m, n, density=0.2, format="csc", random_state=rng,
                      data_rvs=rng.standard_normal)
        dense = A.toarray()
    else:
        dense = rng.standard_normal((m, n))
        A = dense
    k = max(2, n // 20)
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
    vals = np.where(rng.uniform(size=k) < 0.5, 0.0, rng.normal(scale=1.5, size=k))
    x_true = piecewise_signal(n, cuts, vals)
    b = dense @ x_true + noise * rng.standard_normal(m)
    if lam1 is None:
        lam_max = np.max(np.abs(dense.T @ b))
        lam1 = alpha1 * lam_max
        lam2 = alpha2 * lam1
    return ProblemData(A=DesignMatrix(A), b=b, lam1=lam1, lam2=lam2)


def random_prox_inputs(rng, n_max=12):
    n = int(rng.integers(1, n_max + 1))
    scale = float(rng.choice([0.1, 1.0, 10.0]))
    v = scale * rng.standard_normal(n)
    lam1 = float(rng.choice([0.0, 0.1, 1.0, 10.0]))
    lam2 = float(rng.choice([0.0, 0.1, 1.0, 10.0]))
    return v, lam1, lam2
