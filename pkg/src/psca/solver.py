"""Parallel successive convex approximation and serial exact BCD baselines.

Each PSCA iteration is a synchronous fork-join: the coordinator computes the
gradient slice for the selected blocks, workers solve disjoint chunks of
block subproblems against the same read-only snapshot, and after the join the
coordinator alone writes ``x_i + gamma (x_hat_i - x_i)`` for every selected
block. Block solves are elementwise or per-block, so the next iterate is
bit-identical for any worker count.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .diagnostics import prox_gradient_from_grad
from .errors import (
    InvalidArgumentError,
    NumericalFailureError,
    UnsupportedOperationError,
)
from .problem import Iterate, L1Box, LeastSquares, QuadraticForm
from .scheduler import select_blocks
from .stepsize import check_step_gate, gamma_bar, step_at
from .surrogates import best_response_blocks


class Termination(str, Enum):
    TOLERANCE = "tolerance"
    MAX_ITERS = "max-iters"


class SerialRule(str, Enum):
    CYCLIC_EXACT = "cyclic-exact"
    RANDOMIZED_EXACT = "randomized-exact"


@dataclass
class SolverConfig:
    """Run parameters.

    ``stop_tol`` stops the run once the proximal-gradient norm (evaluated
    every ``record_every`` iterations) is at most that value; a non-finite
    ``stop_tol`` disables the test. ``snapshot_every > 0`` keeps copies of
    ``x^r`` at that stride for out-of-band diagnostics.
    """

    schedule: object = None
    steps: object = None
    surrogate: object = None
    workers: int = 1
    max_iters: int = 1000
    stop_tol: float = 0.0
    record_every: int = 1
    inner_tol: float = 1e-8
    snapshot_every: int = 0
    refresh_every: int = 1000
    seed: int = 0
    check_gate: bool = True

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidArgumentError("workers must be at least 1")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be at least 1")
        if self.record_every < 1:
            raise InvalidArgumentError("record_every must be at least 1")
        if self.stop_tol < 0:
            raise InvalidArgumentError("stop_tol must be nonnegative")
        if self.inner_tol <= 0:
            raise InvalidArgumentError("inner_tol must be positive")


@dataclass(slots=True)
class IterationRecord:
    r: int
    objective: float
    step: float
    selected: int
    update_norm_sq: float
    prox_grad_norm: float | None
    wall_clock_ns: int


@dataclass
class SolverTrace:
    """Per-iteration records plus the final point.

    ``records[r].objective`` is ``h(x^r)`` before the step taken at ``r``;
    ``final_objective`` is the objective at ``final_x``.
    """

    records: list
    final_x: np.ndarray
    final_objective: float
    final_prox_grad_norm: float
    termination: Termination
    config: SolverConfig
    seed: int
    algorithm: str = "psca"
    snapshots: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.records)

    @property
    def initial_objective(self):
        return self.records[0].objective if self.records else self.final_objective

    def objectives(self):
        """``h(x^0), ..., h(x^R)`` including the final point."""
        return np.array([rec.objective for rec in self.records] + [self.final_objective])

    def steps(self):
        return np.array([rec.step for rec in self.records])

    def update_norms_sq(self):
        return np.array([rec.update_norm_sq for rec in self.records])


# ---------------------------------------------------------------------------
# PSCA
# ---------------------------------------------------------------------------


def _chunks(problem, blocks, workers):
    """Split ``blocks`` into at most ``workers`` contiguous chunks with coordinate spans."""
    parts = [p for p in np.array_split(blocks, min(workers, blocks.size)) if p.size]
    dims = problem.layout.dims
    spans = []
    pos = 0
    for p in parts:
        width = p.size if problem.layout.is_scalar else int(dims[p].sum())
        spans.append((pos, pos + width))
        pos += width
    return parts, spans


def _solve_blocks(problem, spec, blocks, x, grad_coords, workers, executor, inner_tol):
    if workers <= 1 or blocks.size < 2:
        return best_response_blocks(spec, problem, blocks, x, grad_coords, inner_tol)
    parts, spans = _chunks(problem, blocks, workers)

    def work(k):
        lo, hi = spans[k]
        return best_response_blocks(spec, problem, parts[k], x, grad_coords[lo:hi], inner_tol)

    if executor is None:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(parts))))
    else:
        results = list(executor.map(work, range(len(parts))))
    return np.concatenate(results)


def psca_step(problem, spec, state, blocks, gamma, workers=1, *, grad_coords=None,
              executor=None, inner_tol=1e-8):
    """One PSCA update of the blocks in ``blocks`` with step ``gamma``.

    Returns the next :class:`Iterate` and ``sum_{i in S} ||x_hat_i - x_i||^2``.
    The input iterate is not modified.
    """
    if not 0 < gamma <= 1:
        raise InvalidArgumentError("gamma must lie in (0, 1]")
    blocks = np.asarray(blocks, dtype=np.int64)
    if blocks.size == 0:
        raise InvalidArgumentError("the block set must be nonempty")
    if isinstance(state, Iterate):
        x, r = state.x, state.r
    else:
        x, r = np.asarray(state, dtype=float), 0
    coords = problem.layout.coords(blocks)
    if grad_coords is None:
        grad_coords = problem.gradient(x)[coords]
    xhat = _solve_blocks(problem, spec, blocks, x, grad_coords, workers, executor, inner_tol)
    diff = xhat - x[coords]
    x_new = x.copy()
    x_new[coords] = x[coords] + gamma * diff
    return Iterate(x_new, r + 1), float(diff @ diff)


def _constants_gate(problem, config):
    spec = config.surrogate
    lf = problem.lipschitz_grad_hint
    if lf is None or not lf > 0 or spec.l_tilde is None or not spec.l_tilde > 0:
        check_step_gate(config.steps, None)
        return None
    gbar = gamma_bar(spec.tau, lf, spec.l_tilde, problem.layout.n)
    check_step_gate(config.steps, gbar)
    return gbar


def _stop_enabled(tol):
    return math.isfinite(tol)


def psca_run(problem, config, x0=None):
    """Run PSCA from ``x0`` (default: the problem's feasible initial point).

    Raises
    ------
    NumericalFailureError
        If the objective turns non-finite; the partial trace is attached.
    """
    if config.schedule is None or config.steps is None or config.surrogate is None:
        raise InvalidArgumentError("psca_run needs schedule, steps and surrogate")
    if config.schedule.n != problem.layout.n:
        raise InvalidArgumentError("schedule and problem disagree on the block count")
    if config.check_gate:
        _constants_gate(problem, config)

    lay = problem.layout
    smooth = problem.smooth
    g_part = problem.nonsmooth
    spec = config.surrogate
    inc = bool(getattr(smooth, "incremental", False))
    x = np.array(problem.initial_point() if x0 is None else x0, dtype=float)
    if x.shape != (lay.total_dim,):
        raise InvalidArgumentError("x0 has the wrong length")
    cache = smooth.init_cache(x) if inc else None
    stop = _stop_enabled(config.stop_tol)
    records = []
    snapshots = {}
    termination = Termination.MAX_ITERS
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    t0 = time.perf_counter_ns()

    def current(grad_needed):
        f = smooth.cache_value(cache, x) if inc else smooth.value(x)
        h = f + g_part.value(x)
        grad = None
        if grad_needed:
            grad = smooth.cache_gradient(cache) if inc else smooth.gradient(x)
        return h, grad

    def partial_trace(term):
        return SolverTrace(records, x.copy(), float("nan"), float("nan"), term, config,
                           config.seed, "psca", snapshots)

    try:
        for r in range(config.max_iters):
            if inc and r and r % config.refresh_every == 0:
                cache = smooth.init_cache(x)
            due = r % config.record_every == 0
            h, grad = current(due or not inc)
            if not math.isfinite(h):
                raise NumericalFailureError(f"objective is {h} at iteration {r}", partial_trace(termination))
            pg = None
            if due:
                pg = float(np.linalg.norm(prox_gradient_from_grad(problem, x, grad)))
                if stop and pg <= config.stop_tol:
                    termination = Termination.TOLERANCE
                    break
            if config.snapshot_every and r % config.snapshot_every == 0:
                snapshots[r] = x.copy()
            blocks = select_blocks(config.schedule, r)
            gamma = step_at(config.steps, r)
            coords = lay.coords(blocks)
            gc = smooth.cache_coord_gradient(cache, coords) if inc else grad[coords]
            xhat = _solve_blocks(problem, spec, blocks, x, gc, config.workers, pool, config.inner_tol)
            old = x[coords]
            diff = xhat - old
            new = old + gamma * diff
            x[coords] = new
            if inc:
                smooth.cache_update(cache, coords, new - old)
            records.append(IterationRecord(r, h, gamma, int(blocks.size), float(diff @ diff), pg,
                                           time.perf_counter_ns() - t0))
    finally:
        if pool is not None:
            pool.shutdown()

    if inc:
        cache = smooth.init_cache(x)
    h, grad = current(True)
    if not math.isfinite(h):
        raise NumericalFailureError(f"final objective is {h}", partial_trace(termination))
    pg = float(np.linalg.norm(prox_gradient_from_grad(problem, x, grad)))
    if config.snapshot_every:
        snapshots[len(records)] = x.copy()
    return SolverTrace(records, x, h, pg, termination, config, config.seed, "psca", snapshots)


# ---------------------------------------------------------------------------
# Serial exact BCD
# ---------------------------------------------------------------------------

_SEQ_CHUNK = 1 << 14


def _serial_sequence(rule, n, seed, start, count):
    """Block indices visited at iterations ``start .. start + count - 1``."""
    if rule is SerialRule.CYCLIC_EXACT:
        return (np.arange(start, start + count, dtype=np.int64) % n)
    out = np.empty(count, dtype=np.int64)
    pos = 0
    it = start
    while pos < count:
        k, off = divmod(it, _SEQ_CHUNK)
        gen = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 1, k]))
        seq = gen.integers(n, size=_SEQ_CHUNK, dtype=np.int64)
        take = min(count - pos, _SEQ_CHUNK - off)
        out[pos:pos + take] = seq[off:off + take]
        pos += take
        it += take
    return out


def serial_bcd_run(problem, config, rule=SerialRule.CYCLIC_EXACT, x0=None):
    """Exact coordinate minimization, one scalar block per iteration.

    Supported for least-squares or positive-diagonal quadratic smooth parts
    with an ``L1Box`` nonsmooth part on scalar blocks. The cyclic rule visits
    blocks ``0, 1, ..., n-1, 0, ...``; the randomized rule draws uniformly with
    a counter-based generator keyed by ``config.seed``.
    """
    rule = SerialRule(rule)
    lay = problem.layout
    smooth = problem.smooth
    reg = problem.nonsmooth
    if not (lay.is_scalar and isinstance(reg, L1Box) and isinstance(smooth, (LeastSquares, QuadraticForm))):
        raise UnsupportedOperationError(
            "serial exact BCD needs scalar blocks, a quadratic smooth part and an l1/box regularizer"
        )
    if isinstance(smooth, QuadraticForm) and np.min(np.diagonal(smooth.h)) <= 0:
        raise UnsupportedOperationError("exact coordinate steps need a positive Hessian diagonal")

    x = np.array(problem.initial_point() if x0 is None else x0, dtype=float)
    cache = smooth.init_cache(x)
    stop = _stop_enabled(config.stop_tol)
    records = []
    snapshots = {}
    termination = Termination.MAX_ITERS
    t0 = time.perf_counter_ns()
    lam, lo, hi = reg.lam, reg.lower, reg.upper
    r = 0
    while r < config.max_iters:
        pg = None
        if r % config.record_every == 0:
            grad = smooth.cache_gradient(cache)
            pg = float(np.linalg.norm(prox_gradient_from_grad(problem, x, grad)))
            if stop and pg <= config.stop_tol:
                termination = Termination.TOLERANCE
                break
        if config.snapshot_every and r % config.snapshot_every == 0:
            snapshots[r] = x.copy()
        count = min(config.record_every - r % config.record_every, config.max_iters - r)
        if config.snapshot_every:
            count = min(count, config.snapshot_every - r % config.snapshot_every)
        coords = _serial_sequence(rule, lay.n, config.seed, r, count)
        obj = np.empty(count)
        upd = np.empty(count)
        fval = smooth.cache_value(cache, x)
        gval = reg.value(x)
        t_start = time.perf_counter_ns() - t0
        if isinstance(smooth, QuadraticForm):
            kernels.cd_sweep_hess(smooth.h, coords, x, cache, lam, lo, hi, fval, gval, obj, upd)
        elif smooth.is_sparse:
            data, indices, indptr = smooth._csc
            kernels.cd_sweep_csc(data, indices, indptr, smooth.colsq, coords, x, cache, lam, lo, hi,
                                 fval, gval, obj, upd)
        else:
            kernels.cd_sweep(smooth._dense, smooth.colsq, coords, x, cache, lam, lo, hi, fval, gval,
                             obj, upd)
        t_end = time.perf_counter_ns() - t0
        if not np.all(np.isfinite(obj)):
            partial = SolverTrace(records, x.copy(), float("nan"), float("nan"), termination, config,
                                  config.seed, f"serial-{rule.value}", snapshots)
            raise NumericalFailureError("objective became non-finite", partial)
        for k in range(count):
            wall = t_start + (t_end - t_start) * (k + 1) // count
            records.append(IterationRecord(r + k, float(obj[k]), 1.0, 1, float(upd[k]),
                                           pg if k == 0 else None, int(wall)))
        r += count
        cache = smooth.init_cache(x)

    h = problem.objective(x)
    grad = smooth.gradient(x)
    pg = float(np.linalg.norm(prox_gradient_from_grad(problem, x, grad)))
    if config.snapshot_every:
        snapshots[len(records)] = x.copy()
    return SolverTrace(records, x, h, pg, termination, config, config.seed, f"serial-{rule.value}",
                       snapshots)


__all__ = [
    "IterationRecord",
    "SerialRule",
    "SolverConfig",
    "SolverTrace",
    "Termination",
    "psca_run",
    "psca_step",
    "serial_bcd_run",
]
