import io

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import minimize

from psca.errors import InvalidArgumentError
from psca.lasso import (
    as_problem,
    certify_kkt,
    generate_nesterov,
    load_instance,
    read_instance,
    save_instance,
    soft_threshold,
)
from psca.nonconvex import generate_nonconvex_qp


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-1.7, 0.0) == -1.7
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, 0.2, 5.0]), 1.0), [-2.0, 0.0, 4.0])
    with pytest.raises(InvalidArgumentError):
        soft_threshold(1.0, -0.1)


@pytest.mark.parametrize("method", ["shift", "rescale"])
@pytest.mark.parametrize("seed", range(3))
def test_generated_optimum_is_kkt_certified(method, seed):
    inst = generate_nesterov(60, 150, 0.04, lam=0.8, seed=seed, method=method)
    assert certify_kkt(inst, inst.x_star) <= 1e-10
    assert np.count_nonzero(inst.x_star) == inst.support_size == 6
    assert inst.h_star == inst.objective(inst.x_star)


def test_sparse_base_matrix():
    inst = generate_nesterov(80, 400, 0.02, lam=1.0, seed=1, method="rescale", density=0.05)
    assert sp.issparse(inst.a_matrix) and inst.storage == "csr"
    assert certify_kkt(inst, inst.x_star) <= 1e-10
    with pytest.raises(InvalidArgumentError):
        generate_nesterov(80, 400, 0.02, method="shift", density=0.05)


@pytest.mark.parametrize("rows,cols,sparsity,support", [(2000, 10000, 0.01, 100), (1000, 100000, 0.001, 100)])
def test_large_shapes_support_size(rows, cols, sparsity, support):
    inst = generate_nesterov(rows, cols, sparsity, seed=0, method="rescale", density=2e-4)
    assert inst.support_size == support == np.count_nonzero(inst.x_star)
    assert inst.shape == (rows, cols)
    assert certify_kkt(inst, inst.x_star) <= 1e-10


@pytest.mark.parametrize("kw", [dict(sparsity=0.001), dict(sparsity=0.0), dict(sparsity=1.5), dict(lam=0.0),
                                dict(rows=0), dict(method="nesterov"), dict(density=0.0)])
def test_generator_rejects(kw):
    args = dict(rows=20, cols=50, sparsity=0.1, lam=1.0, seed=0)
    args.update(kw)
    with pytest.raises(InvalidArgumentError):
        generate_nesterov(**args)


def test_zero_point_residuals(small_lasso):
    atb = np.max(np.abs(small_lasso.a_matrix.T @ small_lasso.b))
    assert atb > small_lasso.lam
    assert certify_kkt(small_lasso, np.zeros(200)) == pytest.approx(atb - small_lasso.lam, rel=1e-12)
    big = generate_nesterov(50, 200, 0.05, lam=1.0, seed=3)
    big.lam = float(atb) + 1.0
    assert certify_kkt(big, np.zeros(200)) == 0.0


def test_optimum_is_global(small_lasso):
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = rng.standard_normal(200)
        d *= rng.uniform() / np.linalg.norm(d)
        assert small_lasso.objective(small_lasso.x_star + d) >= small_lasso.h_star - 1e-12


def test_optimum_agrees_with_independent_solver():
    inst = generate_nesterov(30, 60, 0.1, lam=0.5, seed=8)
    a, b, lam = inst.a_matrix, inst.b, inst.lam

    # split x = u - v with u, v >= 0 makes the problem smooth
    def fun(z):
        x = z[:60] - z[60:]
        r = a @ x - b
        g = a.T @ r
        return 0.5 * r @ r + lam * z.sum(), np.concatenate((g + lam, -g + lam))

    res = minimize(fun, np.zeros(120), jac=True, method="L-BFGS-B", bounds=[(0, None)] * 120,
                   options=dict(ftol=1e-15, gtol=1e-12, maxiter=20000))
    assert res.fun == pytest.approx(inst.h_star, rel=1e-8)
    np.testing.assert_allclose(res.x[:60] - res.x[60:], inst.x_star, atol=1e-5)


def test_generation_is_deterministic():
    a = generate_nesterov(40, 100, 0.05, lam=1.2, seed=5)
    b = generate_nesterov(40, 100, 0.05, lam=1.2, seed=5)
    assert a.to_bytes() == b.to_bytes()
    assert a.instance_hash != generate_nesterov(40, 100, 0.05, lam=1.2, seed=6).instance_hash


@pytest.mark.parametrize("kw", [dict(), dict(method="rescale", density=0.1)])
def test_round_trip(tmp_path, kw):
    inst = generate_nesterov(30, 90, 0.05, lam=1.0, seed=2, **kw)
    path = tmp_path / "inst.bin"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.h_star == inst.h_star and back.lam == inst.lam and back.seed == inst.seed
    assert back.storage == inst.storage and back.method == inst.method
    np.testing.assert_array_equal(back.x_star, inst.x_star)
    np.testing.assert_array_equal(back.b, inst.b)
    dense = lambda m: m.toarray() if sp.issparse(m) else m  # noqa: E731
    np.testing.assert_array_equal(dense(back.a_matrix), dense(inst.a_matrix))
    assert back.objective(back.x_star) == inst.h_star
    assert back.instance_hash == inst.instance_hash
    meta = dict(line.split("=", 1) for line in (tmp_path / "inst.bin.meta").read_text().splitlines())
    assert meta["rows"] == "30" and meta["storage"] == inst.storage and float(meta["h_star"]) == inst.h_star
    save_instance(inst, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_read_rejects_garbage():
    for blob in (b"", b"NOTPSCA!" + bytes(100)):
        with pytest.raises(InvalidArgumentError):
            read_instance(io.BytesIO(blob))
    good = generate_nesterov(5, 10, 0.2, seed=0).to_bytes()
    with pytest.raises(InvalidArgumentError):
        read_instance(io.BytesIO(good[:-8]))


def test_as_problem(small_lasso, small_problem):
    g = small_problem.gradient(small_lasso.x_star)
    assert np.max(np.abs(g)) <= small_lasso.lam + 1e-10
    for z, t in ((2.5, 0.3), (-0.1, 4.0)):
        assert small_problem.block_prox(3, np.array([z]), t)[0] == soft_threshold(z, t * small_lasso.lam)
    assert small_problem.is_quadratic
    np.testing.assert_allclose(small_problem.smooth.curvature(), (small_lasso.a_matrix**2).sum(axis=0))


def test_nonconvex_instance():
    inst = generate_nonconvex_qp(n=50, seed=3)
    p = inst.problem
    assert p.smooth.eig_min == pytest.approx(-0.5, abs=1e-10)
    assert p.lipschitz_grad_hint == pytest.approx(max(0.5, p.smooth.eig_max))
    x = p.initial_point()
    assert np.array_equal(x, np.zeros(50)) and p.is_feasible(x)
    assert np.all(np.abs(p.prox_blocks(np.arange(50), 5 * np.ones(50), np.ones(50))) <= 1.0)
