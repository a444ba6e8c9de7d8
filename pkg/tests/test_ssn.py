import numpy as np
import numpy.testing as npt
import pytest

from fusedkite.jacobian import build_jacobian
from fusedkite.prox import fused_prox
from fusedkite.ssn import (
    SsnParams,
    build_newton_system,
    choose_strategy,
    conjugate_gradient,
    grad_psi,
    line_search,
    psi_value,
    solve_newton,
    ssn_solve,
)

from conftest import make_problem


def test_psi_closed_form_without_penalty():
    # with both weights zero the envelope is an explicit quadratic in y
    prob = make_problem(seed=3, m=12, n=25, lam1=0.0, lam2=0.0)
    rng = np.random.default_rng(4)
    xt = rng.standard_normal(prob.n)
    Ad = prob.A.toarray()
    for sigma in (0.5, 1.0, 27.0):
        y = rng.standard_normal(prob.m)
        expect = (0.5 * y @ y + y @ prob.b - y @ (Ad @ xt)
                  + 0.5 * sigma * np.linalg.norm(Ad.T @ y) ** 2)
        got = psi_value(prob, y, xt, sigma)
        assert got == pytest.approx(expect, rel=1e-12)


def test_grad_psi_matches_central_differences():
    prob = make_problem(seed=5, m=10, n=22, alpha1=5e-2)
    rng = np.random.default_rng(6)
    xt = rng.standard_normal(prob.n)
    for sigma in (1.0, 27.0, 100.0):
        y = rng.standard_normal(prob.m)
        g, _ = grad_psi(prob, y, xt, sigma)
        h = 1e-6
        fd = np.empty(prob.m)
        for i in range(prob.m):
            e = np.zeros(prob.m)
            e[i] = h
            fd[i] = (psi_value(prob, y + e, xt, sigma)
                     - psi_value(prob, y - e, xt, sigma)) / (2 * h)
        npt.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_grad_psi_returns_prox_of_shifted_point():
    prob = make_problem(seed=7, m=8, n=15)
    rng = np.random.default_rng(8)
    xt = rng.standard_normal(prob.n)
    y = rng.standard_normal(prob.m)
    sigma = 3.0
    g, pr = grad_psi(prob, y, xt, sigma)
    w = xt - sigma * prob.A.rmat_vec(y)
    ref = fused_prox(w, sigma * prob.lam1, sigma * prob.lam2)
    npt.assert_allclose(pr.x, ref.x, atol=0)
    npt.assert_allclose(g, y + prob.b - prob.A.mat_vec(ref.x), atol=0)


def _newton_setup(seed, m, n, lam1=None, lam2=None, sigma=2.0):
    prob = make_problem(seed=seed, m=m, n=n, lam1=lam1, lam2=lam2)
    rng = np.random.default_rng(seed + 1000)
    xt = rng.standard_normal(n)
    y = 0.1 * rng.standard_normal(m)
    g, pr = grad_psi(prob, y, xt, sigma)
    rep = build_jacobian(pr, sigma * prob.lam1, sigma * prob.lam2)
    return prob, g, rep, sigma


def test_solve_newton_identity_jacobian_closed_form():
    # zero weights keep every coordinate active so the system is I + sigma*AA'
    prob, g, rep, sigma = _newton_setup(9, 14, 30, lam1=0.0, lam2=0.0)
    params = SsnParams()
    system = build_newton_system(prob, sigma, rep, params)
    d, info = solve_newton(system, g, 1e-12, params)
    Ad = prob.A.toarray()
    V = np.eye(prob.m) + sigma * Ad @ Ad.T
    npt.assert_allclose(d, np.linalg.solve(V, -g), rtol=1e-9, atol=1e-11)
    assert info.converged


def test_newton_strategies_agree():
    rng = np.random.default_rng(11)
    for trial in range(12):
        m = int(rng.integers(6, 40))
        n = int(rng.integers(m, 3 * m + 10))
        prob, g, rep, sigma = _newton_setup(200 + trial, m, n)
        sols = {}
        for name in ("full_m", "smw_rb", "smw_ab", "cg"):
            params = SsnParams(strategy=name, cg_max_iter=4000)
            system = build_newton_system(prob, sigma, rep, params)
            tol = 1e-10 * (1.0 + float(np.linalg.norm(g)))
            d, info = solve_newton(system, g, tol, params)
            assert info.converged, (name, info.residual)
            sols[name] = d
        base = sols["full_m"]
        scale = 1.0 + np.linalg.norm(base)
        for name in ("smw_rb", "smw_ab", "cg"):
            assert np.linalg.norm(sols[name] - base) / scale < 1e-7


def test_solve_newton_residual_reported():
    prob, g, rep, sigma = _newton_setup(13, 20, 45)
    params = SsnParams()
    system = build_newton_system(prob, sigma, rep, params)
    d, info = solve_newton(system, g, 1e-10, params)
    res = np.linalg.norm(system.mat_vec(d) + g)
    assert info.residual == pytest.approx(res, rel=1e-6, abs=1e-14)


def test_choose_strategy_thresholds():
    params = SsnParams()
    # r + |beta| within a third of m wins the low-rank route
    assert choose_strategy(30, n_alpha=25, n_beta=5, r=5, params=params) == "smw_rb"
    # otherwise a small alpha set takes the two-sided route
    assert choose_strategy(30, n_alpha=6, n_beta=2, r=9, params=params) == "smw_ab"
    # both fat: dense while m is moderate
    assert choose_strategy(30, n_alpha=25, n_beta=20, r=0, params=params) == "full_m"
    assert choose_strategy(5000, n_alpha=4000, n_beta=3000, r=0, params=params) == "cg"
    forced = SsnParams(strategy="cg")
    assert choose_strategy(3, n_alpha=0, n_beta=0, r=0, params=forced) == "cg"


def test_line_search_accepts_unit_step_on_quadratic():
    c = np.array([1.0, -2.0, 0.5])
    y = np.zeros(3)

    def eval_psi(t):
        return 0.5 * float(np.sum((t - c) ** 2)), None

    d = c - y
    slope = float((y - c) @ d)
    psi0, _ = eval_psi(y)
    alpha, trial, psi_t, _, ok = line_search(eval_psi, y, d, slope, psi0,
                                             SsnParams())
    assert ok and alpha == 1.0
    npt.assert_allclose(trial, c)
    assert psi_t == pytest.approx(0.0, abs=1e-15)


def test_line_search_backtracks_on_overshoot():
    c = np.array([1.0, 1.0])
    y = np.zeros(2)

    def eval_psi(t):
        return 0.5 * float(np.sum((t - c) ** 2)), None

    d = 8.0 * c   # far past the minimizer; full step increases the objective
    slope = float((y - c) @ d)
    psi0, _ = eval_psi(y)
    alpha, _, psi_t, _, ok = line_search(eval_psi, y, d, slope, psi0, SsnParams())
    assert ok and alpha < 1.0
    assert psi_t < psi0


def test_ssn_converges_and_warm_start_is_immediate():
    prob = make_problem(seed=15, m=20, n=50)
    rng = np.random.default_rng(16)
    xt = rng.standard_normal(prob.n)
    y, stats = ssn_solve(prob, xt, 5.0, gtol=1e-10)
    assert stats.converged
    assert stats.gnorms[-1] <= 1e-10
    y2, stats2 = ssn_solve(prob, xt, 5.0, y0=y, gtol=1e-9)
    assert stats2.converged and stats2.iterations == 0
    npt.assert_allclose(y2, y, atol=0)


def test_ssn_tail_is_superlinear():
    prob = make_problem(seed=17, m=25, n=60)
    rng = np.random.default_rng(18)
    xt = rng.standard_normal(prob.n)
    y, stats = ssn_solve(prob, xt, 10.0, gtol=1e-11)
    assert stats.converged
    gn = np.array(stats.gnorms)
    # the last decrease dwarfs a fixed linear rate
    assert gn[-1] <= 1e-2 * gn[-2]


def test_ssn_stop_rule_overrides_gtol():
    prob = make_problem(seed=19, m=15, n=35)
    rng = np.random.default_rng(20)
    xt = rng.standard_normal(prob.n)
    seen = []

    def stop(gnorm, it):
        seen.append(gnorm)
        return gnorm <= 1e-4

    _, stats = ssn_solve(prob, xt, 2.0, stop_rule=stop, gtol=1e-14)
    assert stats.converged
    assert stats.gnorms[-1] <= 1e-4
    assert len(seen) >= 1


def test_conjugate_gradient_solves_spd_system():
    rng = np.random.default_rng(27)
    n = 25
    R = rng.standard_normal((n, n))
    V = R @ R.T + n * np.eye(n)
    rhs = rng.standard_normal(n)
    x, it, res = conjugate_gradient(lambda v: V @ v, rhs, tol=1e-12,
                                    max_iter=500)
    npt.assert_allclose(x, np.linalg.solve(V, rhs), rtol=1e-8, atol=1e-10)
    assert res <= 1e-12
    # warm starting at the answer returns with no work
    x2, it2, _ = conjugate_gradient(lambda v: V @ v, rhs, x0=x, tol=1e-10)
    assert it2 == 0
    npt.assert_allclose(x2, x, atol=0)


def test_conjugate_gradient_respects_iteration_cap():
    rng = np.random.default_rng(28)
    n = 40
    R = rng.standard_normal((n, n))
    V = R @ R.T + 1e-3 * np.eye(n)
    rhs = rng.standard_normal(n)
    _, it, res = conjugate_gradient(lambda v: V @ v, rhs, tol=1e-16, max_iter=3)
    assert it == 3
    assert res > 0
