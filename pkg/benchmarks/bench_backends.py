"""Time the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_backends.py [--rows 200] [--cols 1000] [--repeat 5]

Prints one line per workload with the best-of-``repeat`` time for each
backend and the speedup.
"""

import argparse
import time

import numpy as np

from psca import kernels
from psca.lasso import as_problem, generate_nesterov
from psca.scheduler import RandomizedSchedule
from psca.solver import SerialRule, SolverConfig, psca_run, serial_bcd_run
from psca.stepsize import StepSchedule, gamma_bar
from psca.surrogates import make_surrogate


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def workloads(rows, cols, seed):
    inst = generate_nesterov(rows, cols, 0.01, lam=2.5, seed=seed)
    prob = as_problem(inst)
    sparse = as_problem(generate_nesterov(rows, cols, 0.01, lam=2.5, seed=seed,
                                          method="rescale", density=0.05))
    lf = prob.lipschitz_grad_hint
    spec = make_surrogate(prob, "proximal-linear", 1.1 * lf)
    gbar = gamma_bar(spec.tau, lf, spec.l_tilde, prob.n)
    rng = np.random.default_rng(seed)
    coords = np.sort(rng.choice(cols, size=min(320, cols), replace=False)).astype(np.int64)
    r = rng.standard_normal(rows)
    z = rng.standard_normal(cols)
    t = np.full(cols, 0.3)
    out = np.empty(coords.size)
    out_z = np.empty(cols)
    a = prob.smooth._dense
    sweep = np.arange(cols, dtype=np.int64)

    def cd(problem):
        cfg = SolverConfig(max_iters=5 * cols, record_every=cols)
        return lambda: serial_bcd_run(problem, cfg, SerialRule.CYCLIC_EXACT)

    def run_psca():
        cfg = SolverConfig(schedule=RandomizedSchedule.uniform(prob.n, 0.32, seed=0),
                           steps=StepSchedule.constant(0.5 * gbar), surrogate=spec,
                           max_iters=500, record_every=100)
        psca_run(prob, cfg)

    def cd_sweep_raw():
        x = np.zeros(cols)
        res = -inst.b.copy()
        obj = np.empty(cols)
        upd = np.empty(cols)
        kernels.cd_sweep(a, prob.smooth.colsq, sweep, x, res, 2.5, -np.inf, np.inf,
                         0.5 * float(res @ res), 0.0, obj, upd)

    return [
        ("prox_l1_box", lambda: [kernels.prox_l1_box(z, t, -np.inf, np.inf, out_z) for _ in range(200)]),
        ("gather_dot", lambda: [kernels.gather_dot(a, coords, r, out) for _ in range(200)]),
        ("scatter_axpy", lambda: [kernels.scatter_axpy(a, coords, out * 1e-9, r.copy()) for _ in range(200)]),
        ("cd_sweep (dense)", cd_sweep_raw),
        ("serial BCD dense, 5 sweeps", cd(prob)),
        ("serial BCD csr, 5 sweeps", cd(sparse)),
        ("psca_run, 500 iters", run_psca),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200)
    ap.add_argument("--cols", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the python backend is available")
    loads = workloads(args.rows, args.cols, args.seed)
    print(f"{'workload':30s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    rows = []
    for name, fn in loads:
        times = {}
        for b in backends:
            kernels.set_backend(b)
            fn()  # warm up
            times[b] = best_of(fn, args.repeat)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        rows.append((name, times, speed))
        cells = " ".join(f"{times[b] * 1e3:10.3f}ms" for b in backends)
        print(f"{name:30s} {cells}   {speed:6.1f}x")
    kernels.set_backend(backends[0])
    return rows


if __name__ == "__main__":
    main()
