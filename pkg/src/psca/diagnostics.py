"""Runtime checks of the convergence theory on solver traces.

Everything here is read-only with respect to problems and traces. Constants
that the theory defines as suprema over a level set (``Q``, ``Q_hat``, ``R``)
are estimated as maxima along the observed trajectory, so the audits built on
them are necessary-condition checks only.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InconsistentOptimumError, InvalidArgumentError
from .spectral import power_iteration


# ---------------------------------------------------------------------------
# Proximal-gradient optimality measure
# ---------------------------------------------------------------------------


def prox_gradient_from_grad(problem, x, grad):
    """``x - argmin_y <grad, y - x> + g(y) + ||y - x||^2 / 2`` (block separable)."""
    lay = problem.layout
    y = problem.prox_blocks(np.arange(lay.n), x - grad, np.ones(lay.n))
    return x - y


def prox_gradient_map(problem, x):
    """The proximal-gradient map; zero exactly at stationary points."""
    x = np.asarray(x, dtype=float)
    return prox_gradient_from_grad(problem, x, problem.gradient(x))


def full_best_response(problem, spec, y, grad=None, tol=None):
    """``x_hat(y)``: every block's best response against anchor ``y``."""
    from .surrogates import best_response_blocks

    if grad is None:
        grad = problem.gradient(y)
    blocks = np.arange(problem.layout.n)
    return best_response_blocks(spec, problem, blocks, y, grad, tol)


def proxgrad_bound(problem, spec, x):
    """``(||grad~ h(x)||^2, 2 (2 + 2L + L^2) ||x_hat(x) - x||^2)`` with ``L = max_i L_i``.

    The first never exceeds the second; this is the bridge between the
    optimality measure and the step length used in the nonconvex rate.
    """
    grad = problem.gradient(x)
    pg = prox_gradient_from_grad(problem, x, grad)
    xhat = full_best_response(problem, spec, x, grad)
    big_l = spec.l_max
    return float(pg @ pg), 2.0 * (2.0 + 2.0 * big_l + big_l**2) * float((xhat - x) @ (xhat - x))


# ---------------------------------------------------------------------------
# Sufficient decrease
# ---------------------------------------------------------------------------


@dataclass
class DecreaseViolation:
    r: int
    objective_before: float
    objective_after: float
    bound: float


def _trace_arrays(trace):
    try:
        h = np.asarray(trace.objectives(), dtype=float)
        g = np.asarray(trace.steps(), dtype=float)
        u = np.asarray(trace.update_norms_sq(), dtype=float)
    except AttributeError as exc:
        raise InvalidArgumentError("trace lacks per-iteration objective/step/update fields") from exc
    if h.size != g.size + 1 or u.size != g.size:
        raise InvalidArgumentError("trace arrays have inconsistent lengths")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g)) and np.all(np.isfinite(u))):
        raise InvalidArgumentError("trace has missing per-iteration fields")
    return h, g, u


def sufficient_decrease_audit(trace, tau, l_grad_f, rel_tol=1e-9):
    """Iterations where ``h(x^{r+1})`` exceeds the sufficient-decrease bound.

    The bound is ``h(x^r) + gamma (gamma L_grad_f - tau) / 2 * ||x_hat - x||^2_S``
    plus ``rel_tol * (1 + |h(x^r)|)``.
    """
    h, g, u = _trace_arrays(trace)
    bound = h[:-1] + 0.5 * g * (g * l_grad_f - tau) * u
    bad = np.flatnonzero(h[1:] > bound + rel_tol * (1.0 + np.abs(h[:-1])))
    return [DecreaseViolation(int(r), float(h[r]), float(h[r + 1]), float(bound[r])) for r in bad]


# ---------------------------------------------------------------------------
# Lipschitz continuity of the best-response map
# ---------------------------------------------------------------------------


def bestresponse_ratio(problem, spec, y, z):
    """``||x_hat(y) - x_hat(z)|| / ||y - z||``."""
    d = float(np.linalg.norm(y - z))
    if d == 0.0:
        raise InvalidArgumentError("y and z coincide")
    return float(np.linalg.norm(full_best_response(problem, spec, y) - full_best_response(problem, spec, z))) / d


def lipschitz_bestresponse_probe(problem, spec, trials=100, rng_seed=0, scale=1.0):
    """Largest observed ``||x_hat(y) - x_hat(z)|| / ||y - z||`` over random feasible pairs."""
    from .surrogates import random_feasible

    if trials < 1:
        raise InvalidArgumentError("trials must be at least 1")
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    done = 0
    while done < trials:
        y = random_feasible(problem, rng, scale)
        z = random_feasible(problem, rng, scale)
        if np.array_equal(y, z):
            continue
        worst = max(worst, bestresponse_ratio(problem, spec, y, z))
        done += 1
    return worst


# ---------------------------------------------------------------------------
# Complexity constants
# ---------------------------------------------------------------------------


@dataclass
class ComplexityConstants:
    """Constants of the convergence analysis; ``None`` marks unavailable values."""

    n: int
    l_grad_f: float
    tau: float
    l_tilde: float | None
    l_max: float
    gamma: float
    p_min: float | None
    beta: float
    l_g: float | None
    h0: float
    h_star: float | None = None
    q_grad: float | None = None
    q_hat: float | None = None
    r_dist: float | None = None
    notes: list = field(default_factory=list)

    @property
    def l_hat(self):
        if self.l_tilde is None:
            return None
        return math.sqrt(self.n) * self.l_tilde / self.tau

    @property
    def beta_hat(self):
        return None if self.p_min is None else self.beta * self.gamma * self.p_min

    @property
    def beta_tilde(self):
        return self.beta / self.gamma

    @property
    def theta(self):
        if None in (self.l_g, self.q_hat, self.r_dist, self.l_tilde) or self.gamma >= 1:
            return None
        g = self.gamma
        return (self.l_g**2 + self.q_hat**2
                + 2 * self.n * self.r_dist**2 * self.l_tilde**2 * g**2 / (1 - g) ** 2
                + 2 * self.r_dist**2 * self.l_max**2)

    @property
    def sigma(self):
        if None in (self.p_min, self.q_grad, self.l_g, self.r_dist):
            return None
        num = abs(self.gamma * self.l_grad_f - self.tau) * self.gamma * self.p_min
        return num / (4 * ((self.q_grad + self.l_g) ** 2 + self.n * self.l_max**2 * self.r_dist**2))

    @property
    def sigma_tilde(self):
        theta = self.theta
        if theta is None:
            return None
        g = self.gamma
        return abs(g * self.l_grad_f - self.tau) * g / (6 * self.n * theta * (1 - g) ** 2)

    @property
    def kappa(self):
        bh = self.beta_hat
        if bh is None or self.h_star is None or bh <= 0:
            return None
        big_l = self.l_max
        return 2 * (big_l**2 + 2 * big_l + 2) * (self.h0 - self.h_star) / bh

    def convex_rate_bound(self, r, cyclic=False):
        """``max(4 s - 2, h0 - h*, 2) / (s r)`` with ``s`` = sigma (or sigma_tilde if cyclic)."""
        s = self.sigma_tilde if cyclic else self.sigma
        if s is None or self.h_star is None or r <= 0:
            return None
        return max(4 * s - 2, self.h0 - self.h_star, 2) / (s * r)

    def as_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "notes"}
        for name in ("l_hat", "beta_hat", "beta_tilde", "theta", "sigma", "sigma_tilde", "kappa"):
            out[name] = getattr(self, name)
        return out


def smooth_lipschitz(problem, tol=1e-12):
    """``L_grad_f``: exact for dense quadratics, power iteration for least squares."""
    smooth = problem.smooth
    if hasattr(smooth, "eig_min"):
        return max(abs(smooth.eig_min), abs(smooth.eig_max))
    if hasattr(smooth, "hessian_matvec"):
        return power_iteration(smooth.hessian_matvec, problem.layout.total_dim, tol=tol)
    if problem.lipschitz_grad_hint is None:
        raise InvalidArgumentError("no Lipschitz information for the smooth part")
    return problem.lipschitz_grad_hint


def _effective_gamma(steps, trace):
    from .stepsize import StepKind

    if steps.kind is StepKind.CONSTANT:
        return steps.gamma0
    return float(trace.records[-1].step) if trace.records else steps.gamma0


def estimate_constants(problem, spec, schedule, steps, trace, certified=None, h_star=None,
                       l_grad_f=None):
    """Assemble :class:`ComplexityConstants` from the problem, run and trace.

    ``certified`` is an optional ``(x_star, h_star)`` pair; without it ``R``,
    ``theta`` and the sigma constants stay unavailable. ``h_star`` alone (for
    instance a trajectory minimum) is enough for ``kappa``. ``Q`` and
    ``Q_hat`` need iterate snapshots in the trace.
    """
    if not trace.records:
        raise InvalidArgumentError("the trace is empty")
    lf = smooth_lipschitz(problem) if l_grad_f is None else l_grad_f
    gamma = _effective_gamma(steps, trace)
    p_min = getattr(schedule, "p_min", None)
    notes = []
    if gamma * lf > spec.tau:
        notes.append("gamma * L_grad_f exceeds tau; beta uses |tau - gamma L|")
    beta = abs(spec.tau - gamma * lf) / 2.0
    x_star = None
    if certified is not None:
        x_star, h_star = certified
    consts = ComplexityConstants(
        n=problem.layout.n,
        l_grad_f=lf,
        tau=spec.tau,
        l_tilde=spec.l_tilde,
        l_max=spec.l_max,
        gamma=gamma,
        p_min=p_min,
        beta=beta,
        l_g=problem.nonsmooth.lipschitz(problem.layout),
        h0=trace.initial_objective,
        h_star=h_star,
        notes=notes,
    )
    snaps = [trace.snapshots[k] for k in sorted(trace.snapshots)]
    if snaps:
        q = 0.0
        qh = 0.0
        for x in snaps:
            grad = problem.gradient(x)
            q = max(q, float(np.linalg.norm(grad)))
            xhat = full_best_response(problem, spec, x, grad)
            sg = _stacked_surrogate_gradient(problem, spec, x, xhat, grad)
            qh = max(qh, float(np.linalg.norm(sg)))
        consts.q_grad, consts.q_hat = q, qh
        if x_star is not None:
            consts.r_dist = max(float(np.linalg.norm(x - x_star)) for x in snaps)
    else:
        notes.append("no iterate snapshots; Q and Q_hat unavailable")
    return consts


def _stacked_surrogate_gradient(problem, spec, x, xhat, grad):
    from .surrogates import SurrogateFamily

    d = xhat - x
    out = grad + spec.alpha * d
    if spec.family is SurrogateFamily.BLOCK_PROXIMAL:
        lay = problem.layout
        if lay.is_scalar:
            out = out + problem.smooth.curvature() * d
        else:
            for i in range(lay.n):
                sl = lay.block(i)
                out[sl] += problem.smooth.hessian_block(np.arange(sl.start, sl.stop)) @ d[sl]
    return out


# ---------------------------------------------------------------------------
# Rate fits
# ---------------------------------------------------------------------------

DEFAULT_EPS_GRID = tuple(10.0 ** -k for k in range(0, 9))


@dataclass
class RateFit:
    c_fit: float
    t_epsilon_table: list
    gaps: np.ndarray = field(repr=False)


def rate_fit(trace, h_star, burn_in=0, eps_grid=DEFAULT_EPS_GRID, stride=1, tol=1e-9):
    """Smallest ``C`` with ``h(x^r) - h* <= C / r`` for ``r > burn_in``, and first-hit times.

    ``stride > 1`` subsamples ``h(x^{stride * r})`` (one point per cyclic
    sweep) before fitting, with ``r`` counted in sweeps.

    Raises
    ------
    InconsistentOptimumError
        If some objective lies below ``h_star`` by more than ``tol * (1 + |h*|)``.
    """
    h = np.asarray(trace.objectives(), dtype=float)
    gaps = h - h_star
    if np.min(gaps) < -tol * (1.0 + abs(h_star)):
        raise InconsistentOptimumError(
            f"objective {np.min(h):.17g} lies below the claimed optimum {h_star:.17g}"
        )
    gaps = np.maximum(gaps, 0.0)
    sub = gaps[::stride]
    r = np.arange(sub.size)
    mask = r > burn_in
    c_fit = float(np.max(r[mask] * sub[mask])) if mask.any() else 0.0
    table = []
    for eps in eps_grid:
        hit = np.flatnonzero(gaps <= eps)
        table.append((eps, int(hit[0]) if hit.size else None))
    return RateFit(c_fit, table, gaps)


def ensemble_t_epsilon(traces, eps_grid):
    """First iteration where the seed-averaged ``||grad~ h(x^r)||^2`` is at most ``eps``.

    Every trace must record the proximal-gradient norm at every iteration; a
    trace that stopped early keeps contributing its final value.
    """
    if not traces:
        raise InvalidArgumentError("no traces")
    length = max(t.iterations for t in traces) + 1
    acc = np.zeros(length)
    for t in traces:
        vals = [rec.prox_grad_norm for rec in t.records]
        if any(v is None for v in vals):
            raise InvalidArgumentError("ensemble traces need record_every = 1")
        vals.append(t.final_prox_grad_norm)
        v = np.asarray(vals) ** 2
        acc[: v.size] += v
        acc[v.size:] += v[-1]
    mean = acc / len(traces)
    out = []
    for eps in eps_grid:
        hit = np.flatnonzero(mean <= eps)
        out.append((eps, int(hit[0]) if hit.size else None))
    return out, mean


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class AuditCheck:
    name: str
    passed: bool
    details: dict


@dataclass
class AuditReport:
    checks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, name, passed, **details):
        self.checks.append(AuditCheck(name, bool(passed), details))

    def to_text(self):
        lines = ["PSCA audit report", "================="]
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}")
            for k, v in c.details.items():
                lines.append(f"    {k}: {_fmt(v)}")
        if self.constants:
            lines.append("constants:")
            for k, v in self.constants.items():
                lines.append(f"    {k}: {_fmt(v)}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_summary(self):
        out = {"overall": "pass" if self.passed else "fail"}
        for c in self.checks:
            out[f"{c.name}.passed"] = str(c.passed).lower()
            for k, v in c.details.items():
                if not isinstance(v, (list, tuple, dict)):
                    out[f"{c.name}.{k}"] = _fmt(v)
        for k, v in self.constants.items():
            out[f"const.{k}"] = _fmt(v)
        return "".join(f"{k}={v}\n" for k, v in out.items())


def _fmt(v):
    if v is None:
        return "unavailable"
    if isinstance(v, float):
        return repr(v)
    return str(v)
