import math
from types import SimpleNamespace

import numpy as np
import pytest

from psca.diagnostics import (
    AuditReport,
    bestresponse_ratio,
    ensemble_t_epsilon,
    estimate_constants,
    full_best_response,
    lipschitz_bestresponse_probe,
    prox_gradient_map,
    proxgrad_bound,
    rate_fit,
    smooth_lipschitz,
    sufficient_decrease_audit,
)
from psca.errors import InconsistentOptimumError, InvalidArgumentError
from psca.lasso import as_problem, generate_nesterov
from psca.problem import BlockLayout, L1Box, LeastSquares, Problem, QuadraticForm
from psca.scheduler import RandomizedSchedule
from psca.solver import SolverConfig, psca_run
from psca.stepsize import StepSchedule, gamma_bar
from psca.surrogates import make_surrogate, subproblem_residual

from conftest import random_qp


class FakeTrace:
    def __init__(self, h, steps, upd):
        self.h, self.g, self.u = map(np.asarray, (h, steps, upd))

    def objectives(self):
        return self.h

    def steps(self):
        return self.g

    def update_norms_sq(self):
        return self.u


def _run(problem, iters, p=0.3, seed=1, **kw):
    lf = problem.lipschitz_grad_hint
    spec = make_surrogate(problem, "proximal-linear", 1.1 * lf)
    gb = gamma_bar(spec.tau, lf, spec.l_tilde, problem.n)
    cfg = SolverConfig(schedule=RandomizedSchedule.uniform(problem.n, p, seed),
                       steps=StepSchedule.constant(0.5 * gb), surrogate=spec, max_iters=iters, **kw)
    return spec, cfg, psca_run(problem, cfg)


def test_prox_gradient_map_zero_at_optimum(small_lasso, small_problem):
    assert np.max(np.abs(prox_gradient_map(small_problem, small_lasso.x_star))) <= 1e-12


def test_prox_gradient_map_is_gradient_without_regularizer():
    p = random_qp(n=6, lam=0.0, seed=3)
    x = np.random.default_rng(0).standard_normal(6)
    np.testing.assert_allclose(prox_gradient_map(p, x), p.gradient(x), rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_prox_gradient_map_grid_one_dimensional(seed):
    rng = np.random.default_rng(seed)
    a, b, lam, x = rng.standard_normal((3, 1)), rng.standard_normal(3), rng.uniform(0.1, 2), rng.standard_normal(1)
    p = Problem(BlockLayout([1]), LeastSquares(a, b), L1Box(lam))
    g = p.gradient(x)[0]
    y = np.linspace(-10, 10, 20_000_001)
    best = y[np.argmin(g * (y - x[0]) + lam * np.abs(y) + 0.5 * (y - x[0]) ** 2)]
    assert abs(prox_gradient_map(p, x)[0] - (x[0] - best)) <= 1e-5


def test_stationarity_characterization(small_lasso, small_problem):
    spec = make_surrogate(small_problem)
    x = small_lasso.x_star
    grad = small_problem.gradient(x)
    res = [subproblem_residual(spec, small_problem, i, x[i:i + 1], x, grad) for i in range(200)]
    assert max(res) <= 1e-10 and np.linalg.norm(prox_gradient_map(small_problem, x)) <= 1e-10
    y = x + 0.01 * np.random.default_rng(0).standard_normal(200)
    grad = small_problem.gradient(y)
    res = [subproblem_residual(spec, small_problem, i, y[i:i + 1], y, grad) for i in range(200)]
    assert max(res) > 1e-10 and np.linalg.norm(prox_gradient_map(small_problem, y)) > 1e-10


@pytest.mark.parametrize("family", ["proximal-linear", "block-proximal"])
def test_proxgrad_bounded_by_update(small_problem, family):
    spec = make_surrogate(small_problem, family)
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = rng.standard_normal(200)
        lhs, rhs = proxgrad_bound(small_problem, spec, x)
        assert lhs <= rhs * (1 + 1e-12)


def test_decrease_audit_synthetic():
    # tau = 1, L = 1, gamma = 0.5 -> bound coefficient -0.125
    ok = FakeTrace([10.0, 9.0, 9.0], [0.5, 0.5], [1.0, 0.0])
    assert sufficient_decrease_audit(ok, 1.0, 1.0) == []
    bad = FakeTrace([10.0, 10.5, 10.4], [0.5, 0.5], [1.0, 0.2])
    v = sufficient_decrease_audit(bad, 1.0, 1.0)
    assert [x.r for x in v] == [0]
    assert v[0].bound == pytest.approx(10.0 - 0.125)
    # decrease smaller than promised is also flagged
    short = FakeTrace([10.0, 9.99], [0.5], [1.0])
    assert len(sufficient_decrease_audit(short, 1.0, 1.0)) == 1


def test_decrease_audit_rejects_missing_fields():
    with pytest.raises(InvalidArgumentError):
        sufficient_decrease_audit(FakeTrace([1.0, np.nan], [0.5], [1.0]), 1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        sufficient_decrease_audit(FakeTrace([1.0], [0.5], [1.0]), 1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        sufficient_decrease_audit(object(), 1.0, 1.0)


def test_decrease_audit_on_real_run(small_problem):
    spec, cfg, tr = _run(small_problem, 2000)
    assert sufficient_decrease_audit(tr, spec.tau, small_problem.lipschitz_grad_hint) == []


def test_probe_single_coordinate_on_separable_problem():
    h = np.diag([1.0, 2.0, 3.0])
    p = Problem(BlockLayout.uniform(3), QuadraticForm(h, np.zeros(3)), L1Box(0.2), 3.0)
    spec = make_surrogate(p, "proximal-linear", 3.5)
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.standard_normal(3)
        y = z.copy()
        y[1] += rng.standard_normal()
        assert bestresponse_ratio(p, spec, y, z) <= spec.l_tilde / spec.tau + 1e-12


def test_probe_respects_bound(small_problem):
    spec = make_surrogate(small_problem)
    ratio = lipschitz_bestresponse_probe(small_problem, spec, trials=50, rng_seed=2)
    assert 0 < ratio <= math.sqrt(small_problem.n) * spec.l_tilde / spec.tau + 1e-6
    with pytest.raises(InvalidArgumentError):
        lipschitz_bestresponse_probe(small_problem, spec, trials=0)


def test_probe_limit_along_direction(small_problem):
    spec = make_surrogate(small_problem)
    z = np.random.default_rng(1).standard_normal(200)
    e = np.zeros(200)
    e[0] = 1.0
    ratios = [bestresponse_ratio(small_problem, spec, z + t * e, z) for t in 10.0 ** -np.arange(1, 7)]
    bound = math.sqrt(small_problem.n) * spec.l_tilde / spec.tau
    assert max(ratios) <= bound
    assert abs(ratios[-1] - ratios[-2]) <= 1e-3 * max(1.0, ratios[-1])


def test_lipschitz_identity():
    p = Problem(BlockLayout.uniform(5), LeastSquares(np.eye(5), np.ones(5)), L1Box(0.0))
    assert smooth_lipschitz(p) == pytest.approx(1.0, abs=1e-9)


def test_lipschitz_power_iteration_matches_eigensolver():
    inst = generate_nesterov(100, 400, 0.02, seed=7)
    p = as_problem(inst, lipschitz_grad_hint=1.0)
    dense = np.linalg.eigvalsh(inst.a_matrix.T @ inst.a_matrix)[-1]
    assert smooth_lipschitz(p) == pytest.approx(dense, rel=1e-5)


def test_estimate_constants(small_lasso, small_problem):
    spec, cfg, tr = _run(small_problem, 300, snapshot_every=50)
    c = estimate_constants(small_problem, spec, cfg.schedule, cfg.steps, tr,
                           certified=(small_lasso.x_star, small_lasso.h_star))
    assert c.l_hat == math.sqrt(c.n) * c.l_tilde / c.tau
    lmax = c.l_max
    assert c.kappa == 2 * (lmax**2 + 2 * lmax + 2) * (c.h0 - c.h_star) / c.beta_hat
    assert c.beta == pytest.approx(abs(c.tau - c.gamma * c.l_grad_f) / 2)
    assert c.l_g == pytest.approx(small_lasso.lam * math.sqrt(200))
    assert None not in (c.q_grad, c.q_hat, c.r_dist, c.theta, c.sigma, c.sigma_tilde)
    expect_theta = (c.l_g**2 + c.q_hat**2 + 2 * c.n * c.r_dist**2 * c.l_tilde**2 * c.gamma**2 / (1 - c.gamma) ** 2
                    + 2 * c.r_dist**2 * lmax**2)
    assert c.theta == pytest.approx(expect_theta, rel=1e-14)
    d = c.as_dict()
    assert d["kappa"] == c.kappa and "sigma" in d
    # the convex rate bound holds on the observed trajectory
    gaps = tr.objectives() - small_lasso.h_star
    assert all(gaps[r] <= c.convex_rate_bound(r) for r in range(1, gaps.size))


def test_estimate_constants_without_optimum(small_problem):
    spec, cfg, tr = _run(small_problem, 50)
    c = estimate_constants(small_problem, spec, cfg.schedule, cfg.steps, tr)
    assert c.r_dist is None and c.theta is None and c.sigma is None and c.kappa is None
    assert c.q_grad is None and c.notes


def test_rate_fit_synthetic():
    r = np.arange(1, 1001)
    h = np.concatenate(([5.0], 2.0 + 1.0 / r))
    fit = rate_fit(SimpleNamespace(objectives=lambda: h), 2.0)
    assert fit.c_fit == pytest.approx(1.0, rel=1e-12)
    flat = np.full(1001, 3.0)
    short = rate_fit(SimpleNamespace(objectives=lambda: flat[:501]), 2.0).c_fit
    long = rate_fit(SimpleNamespace(objectives=lambda: flat), 2.0).c_fit
    assert long == pytest.approx(2 * short)
    table = dict(rate_fit(SimpleNamespace(objectives=lambda: h), 2.0, eps_grid=(1e-2, 1e-4)).t_epsilon_table)
    assert table == {1e-2: 100, 1e-4: None}
    with pytest.raises(InconsistentOptimumError):
        rate_fit(SimpleNamespace(objectives=lambda: h), 2.5)


def test_rate_fit_stride_counts_cycles():
    h = 1.0 + 1.0 / np.maximum(np.arange(100), 1)
    fit = rate_fit(SimpleNamespace(objectives=lambda: h), 1.0, stride=10)
    assert fit.c_fit == pytest.approx(max(k * 1.0 / (10 * k) for k in range(1, 10)))


def test_rate_fit_stable_under_truncation(small_lasso, small_problem):
    spec, cfg, tr = _run(small_problem, 20000, p=0.5, stop_tol=1e-7, record_every=100)
    h = tr.objectives()
    full = rate_fit(tr, small_lasso.h_star).c_fit
    half = rate_fit(SimpleNamespace(objectives=lambda: h[: h.size // 2]), small_lasso.h_star).c_fit
    assert math.isfinite(full) and abs(full - half) <= 0.05 * full


def test_ensemble_t_epsilon():
    def tr(vals):
        recs = [SimpleNamespace(prox_grad_norm=v) for v in vals[:-1]]
        return SimpleNamespace(records=recs, final_prox_grad_norm=vals[-1], iterations=len(recs))

    table, mean = ensemble_t_epsilon([tr([1.0, 0.5, 0.1]), tr([1.0, 0.1])], [0.5, 0.1, 1e-3])
    np.testing.assert_allclose(mean, [1.0, 0.13, 0.01])
    assert table == [(0.5, 1), (0.1, 2), (1e-3, None)]
    with pytest.raises(InvalidArgumentError):
        ensemble_t_epsilon([tr([None, 1.0])], [0.1])


def test_full_best_response_matches_blockwise(small_problem):
    spec = make_surrogate(small_problem)
    y = np.random.default_rng(0).standard_normal(200)
    g = small_problem.gradient(y)
    expect = small_problem.prox_blocks(np.arange(200), y - g / spec.alpha, np.full(200, 1 / spec.alpha))
    np.testing.assert_array_equal(full_best_response(small_problem, spec, y), expect)


def test_audit_report_serialization():
    rep = AuditReport()
    rep.add("a", True, value=1.5, missing=None)
    rep.add("b", False, count=3)
    rep.constants = {"tau": 2.0}
    text = rep.to_text()
    assert "[PASS] a" in text and "[FAIL] b" in text and "overall: FAIL" in text
    kv = dict(line.split("=", 1) for line in rep.to_summary().splitlines())
    assert kv == {"overall": "fail", "a.passed": "true", "a.value": "1.5", "a.missing": "unavailable",
                  "b.passed": "false", "b.count": "3", "const.tau": "2.0"}
