"""Block surrogates of the smooth part and the per-block best response.

Two families are built in:

``PROXIMAL_LINEAR``
    ``<grad_i f(y), x_i - y_i> + (alpha/2) ||x_i - y_i||^2`` (anchored: the
    constant ``f(y)`` is dropped).
``BLOCK_PROXIMAL``
    ``f(x_i, y_{-i}) + (alpha/2) ||x_i - y_i||^2``; only offered for quadratic
    smooth parts, where it is exact and cheap.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConvergenceError, InvalidArgumentError, UnsupportedOperationError

# Power-iteration estimates sit slightly below the true constant.
_LIP_SAFETY = 1.0 + 1e-8


class SurrogateFamily(str, Enum):
    PROXIMAL_LINEAR = "proximal-linear"
    BLOCK_PROXIMAL = "block-proximal"


@dataclass(frozen=True)
class SurrogateSpec:
    """Surrogate family with its certified constants.

    Attributes
    ----------
    family : SurrogateFamily
    alpha : float
        Proximal coefficient.
    tau : float
        Uniform strong-convexity modulus of every block surrogate.
    l_tilde : float or None
        Lipschitz constant of ``grad_{x_i} f~_i(x_i, .)`` in the anchor;
        ``None`` when no bound is available.
    l_block : ndarray
        Per-block Lipschitz constants of ``grad_{x_i} f~_i(., y)``.
    """

    family: SurrogateFamily
    alpha: float
    tau: float
    l_tilde: float | None
    l_block: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.alpha > 0 or not self.tau > 0:
            raise InvalidArgumentError("alpha and tau must be positive")
        if self.l_tilde is not None and self.l_tilde < 0:
            raise InvalidArgumentError("l_tilde must be nonnegative")
        if self.family is SurrogateFamily.PROXIMAL_LINEAR:
            if self.tau != self.alpha or np.any(self.l_block != self.alpha):
                raise InvalidArgumentError("proximal-linear requires tau = L_i = alpha")
        elif self.tau < self.alpha or np.any(self.l_block < self.alpha):
            raise InvalidArgumentError("block-proximal requires tau >= alpha and L_i >= alpha")

    @property
    def l_max(self):
        return float(np.max(self.l_block))


def _block_curvatures(problem):
    """Per-block (lambda_min, lambda_max) of the Hessian diagonal blocks."""
    lay = problem.layout
    if lay.is_scalar:
        c = problem.smooth.curvature()
        return c, c
    lo = np.empty(lay.n)
    hi = np.empty(lay.n)
    for i in range(lay.n):
        ev = np.linalg.eigvalsh(problem.smooth.hessian_block(np.arange(*lay.offsets[i:i + 2])))
        lo[i], hi[i] = ev[0], ev[-1]
    return lo, hi


def _anchor_lipschitz(problem, shift, alpha):
    """Bound on ``||(H e_i - shift_i e_i)||`` maximized over blocks, or a fallback.

    ``shift`` is the diagonal removed from the Hessian row by the surrogate
    (``alpha`` for proximal-linear, ``c_i + alpha`` for block-proximal).
    """
    lf = problem.lipschitz_grad_hint
    smooth = problem.smooth
    if problem.layout.is_scalar and hasattr(smooth, "hessian_row_norms"):
        c = smooth.curvature()
        rows = smooth.hessian_row_norms()
        return float(np.sqrt(np.max(np.maximum(rows**2 - 2.0 * shift * c + shift**2, 0.0))))
    if problem.layout.is_scalar and getattr(smooth, "is_psd", False) and lf is not None:
        # ||H e_i||^2 <= L c_i for PSD H
        c = smooth.curvature()
        return float(np.sqrt(np.max(np.maximum(lf * _LIP_SAFETY * c - 2.0 * shift * c + shift**2, 0.0))))
    if lf is None:
        return None
    return lf * _LIP_SAFETY + alpha


def make_surrogate(problem, family="proximal-linear", alpha=None):
    """Build a :class:`SurrogateSpec` with constants derived from ``problem``.

    When ``alpha`` is omitted it defaults to ``1.1 * max_i c_i`` (largest
    block curvature) for proximal-linear and ``0.1 * max_i c_i`` for
    block-proximal; non-quadratic problems fall back to the gradient
    Lipschitz hint.
    """
    family = SurrogateFamily(family)
    lay = problem.layout
    quadratic = problem.is_quadratic
    if family is SurrogateFamily.BLOCK_PROXIMAL and not quadratic:
        raise UnsupportedOperationError(
            "block-proximal surrogates need a quadratic smooth part (blockwise substitution)"
        )
    if alpha is None:
        if quadratic:
            cmax = float(np.max(_block_curvatures(problem)[1]))
            alpha = (1.1 if family is SurrogateFamily.PROXIMAL_LINEAR else 0.1) * cmax
        elif problem.lipschitz_grad_hint:
            alpha = 1.1 * problem.lipschitz_grad_hint
        else:
            raise InvalidArgumentError("alpha is required when no curvature information exists")
    alpha = float(alpha)
    if not alpha > 0:
        raise InvalidArgumentError("alpha must be positive")

    if family is SurrogateFamily.PROXIMAL_LINEAR:
        l_block = np.full(lay.n, alpha)
        l_tilde = _anchor_lipschitz(problem, alpha, alpha)
        return SurrogateSpec(family, alpha, alpha, l_tilde, l_block)

    lo, hi = _block_curvatures(problem)
    if np.min(lo) < 0:
        raise UnsupportedOperationError("block-proximal needs nonnegative block curvature")
    tau = float(np.min(lo)) + alpha
    l_block = hi + alpha
    if lay.is_scalar:
        l_tilde = _anchor_lipschitz(problem, lo + alpha, alpha)
    elif problem.lipschitz_grad_hint is not None:
        l_tilde = problem.lipschitz_grad_hint * _LIP_SAFETY + alpha
    else:
        l_tilde = None
    return SurrogateSpec(family, alpha, tau, l_tilde, l_block)


# ---------------------------------------------------------------------------
# Values and gradients
# ---------------------------------------------------------------------------


def _grad_block(problem, i, y, grad):
    if grad is None:
        grad = problem.gradient(y)
    return grad[problem.layout.block(i)]


def _require_quadratic(spec, problem):
    if spec.family is SurrogateFamily.BLOCK_PROXIMAL and not problem.is_quadratic:
        raise UnsupportedOperationError("block-proximal surrogate needs a quadratic smooth part")


def _hess_block(problem, i):
    lay = problem.layout
    if lay.is_scalar:
        return np.array([[problem.smooth.curvature()[i]]])
    return problem.smooth.hessian_block(np.arange(*lay.offsets[i:i + 2]))


def surrogate_value(spec, problem, i, x_i, y, grad=None):
    """``f~_i(x_i, y)``; proximal-linear values are relative to ``f(y)``."""
    _require_quadratic(spec, problem)
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    d = x_i - y[problem.layout.block(i)]
    gi = _grad_block(problem, i, y, grad)
    val = float(gi @ d) + 0.5 * spec.alpha * float(d @ d)
    if spec.family is SurrogateFamily.BLOCK_PROXIMAL:
        val += problem.smooth.value(y) + 0.5 * float(d @ (_hess_block(problem, i) @ d))
    return val


def surrogate_gradient(spec, problem, i, x_i, y, grad=None):
    """``grad_{x_i} f~_i(x_i, y)``."""
    _require_quadratic(spec, problem)
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    d = x_i - y[problem.layout.block(i)]
    out = _grad_block(problem, i, y, grad) + spec.alpha * d
    if spec.family is SurrogateFamily.BLOCK_PROXIMAL:
        out = out + _hess_block(problem, i) @ d
    return out


def subproblem_residual(spec, problem, i, u, y, grad=None):
    """Norm of the unit-step proximal-gradient map of ``h~_i(., y)`` at ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    g = surrogate_gradient(spec, problem, i, u, y, grad)
    return float(np.linalg.norm(u - problem.block_prox(i, u - g, 1.0)))


# ---------------------------------------------------------------------------
# Best response
# ---------------------------------------------------------------------------


def best_response(spec, problem, i, y, tol=None, grad=None, start=None, max_inner=10000):
    """``argmin_{x_i in X_i} f~_i(x_i, y) + g_i(x_i)``.

    Closed forms are used for proximal-linear and for scalar-block
    block-proximal; other block-proximal blocks run a proximal-gradient loop
    from ``start`` (default ``y_i``) until the subproblem residual is at most
    ``tol``.

    Raises
    ------
    ConvergenceError
        If the inner loop needs more than ``max_inner`` iterations.
    """
    _require_quadratic(spec, problem)
    lay = problem.layout
    yi = y[lay.block(i)]
    gi = _grad_block(problem, i, y, grad)
    if spec.family is SurrogateFamily.PROXIMAL_LINEAR:
        return problem.block_prox(i, yi - gi / spec.alpha, 1.0 / spec.alpha)
    hb = _hess_block(problem, i)
    if hb.shape == (1, 1):
        denom = hb[0, 0] + spec.alpha
        return problem.block_prox(i, yi - gi / denom, 1.0 / denom)

    tol = 1e-8 if tol is None else tol
    q = hb + spec.alpha * np.eye(hb.shape[0])
    step = 1.0 / np.linalg.eigvalsh(q)[-1]
    u = np.array(yi if start is None else start, dtype=float)
    res = np.inf
    for _ in range(max_inner):
        grad_u = gi + q @ (u - yi)
        res = float(np.linalg.norm(u - problem.block_prox(i, u - grad_u, 1.0)))
        if res <= tol:
            return u
        u = problem.block_prox(i, u - step * grad_u, step)
    raise ConvergenceError(f"block {i}: inner solve stalled at residual {res:.3e}", res, block=i)


def best_response_blocks(spec, problem, blocks, y, grad_coords, tol=None):
    """Best responses for several blocks against the same anchor ``y``.

    ``grad_coords`` is ``grad f(y)`` restricted to the coordinates of
    ``blocks`` (in order). Returns the concatenated block solutions.
    Scalar closed forms are evaluated elementwise, so the result for each
    block does not depend on which other blocks are in the batch.
    """
    lay = problem.layout
    blocks = np.asarray(blocks, dtype=np.int64)
    coords = lay.coords(blocks)
    y_c = y[coords]
    if spec.family is SurrogateFamily.PROXIMAL_LINEAR:
        return problem.prox_blocks(blocks, y_c - grad_coords / spec.alpha, 1.0 / spec.alpha)
    _require_quadratic(spec, problem)
    if lay.is_scalar:
        denom = problem.smooth.curvature()[blocks] + spec.alpha
        return problem.prox_blocks(blocks, y_c - grad_coords / denom, 1.0 / denom)
    out = np.empty_like(y_c)
    pos = 0
    full = np.zeros(lay.total_dim)
    full[coords] = grad_coords
    for i in blocks:
        d = int(lay.dims[i])
        try:
            out[pos:pos + d] = best_response(spec, problem, int(i), y, tol=tol, grad=full)
        except ConvergenceError as exc:
            exc.block = int(i)
            raise
        pos += d
    return out


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


def random_feasible(problem, rng, scale=1.0):
    """A random feasible point: Gaussian draw projected block by block."""
    lay = problem.layout
    z = scale * rng.standard_normal(lay.total_dim)
    return problem.prox_blocks(np.arange(lay.n), z, np.full(lay.n, 1e-300))


def verify_gradient_consistency(spec, problem, y, trials=None, rng_seed=0):
    """Max over sampled blocks of ``||grad f~_i(y_i, y) - grad_i f(y)||``.

    ``trials=None`` checks every block.
    """
    lay = problem.layout
    grad = problem.gradient(y)
    if trials is None or trials >= lay.n:
        blocks = range(lay.n)
    else:
        blocks = np.random.default_rng(rng_seed).choice(lay.n, size=trials, replace=False)
    worst = 0.0
    for i in blocks:
        i = int(i)
        sl = lay.block(i)
        g = surrogate_gradient(spec, problem, i, y[sl], y, grad)
        worst = max(worst, float(np.linalg.norm(g - grad[sl])))
    return worst


@dataclass
class ConstantsReport:
    tau_ok: bool
    l_tilde_observed: float
    l_block_observed: np.ndarray


def certify_constants(spec, problem, trials=20, rng_seed=0, scale=1.0):
    """Empirical check of the surrogate constants on random samples.

    Reports the largest observed anchor-Lipschitz ratio (a lower bound on
    ``L~``), the largest observed per-block gradient-Lipschitz ratio, and
    whether the strong-convexity inequality with ``tau`` held on every sample.
    """
    rng = np.random.default_rng(rng_seed)
    lay = problem.layout
    l_block = np.zeros(lay.n)
    l_tilde = 0.0
    tau_ok = True
    for _ in range(trials):
        y = random_feasible(problem, rng, scale)
        z = random_feasible(problem, rng, scale)
        gy = problem.gradient(y)
        gz = problem.gradient(z)
        dyz = float(np.linalg.norm(y - z))
        for i in range(lay.n):
            sl = lay.block(i)
            d = int(lay.dims[i])
            xi = y[sl] + scale * rng.standard_normal(d)
            xp = y[sl] + scale * rng.standard_normal(d)
            f_x = surrogate_value(spec, problem, i, xi, y, gy)
            f_p = surrogate_value(spec, problem, i, xp, y, gy)
            g_x = surrogate_gradient(spec, problem, i, xi, y, gy)
            g_p = surrogate_gradient(spec, problem, i, xp, y, gy)
            dx = xi - xp
            nx = float(np.linalg.norm(dx))
            if nx > 0:
                l_block[i] = max(l_block[i], float(np.linalg.norm(g_x - g_p)) / nx)
                gap = f_x - f_p - float(g_p @ dx) - 0.5 * spec.tau * nx**2
                if gap < -1e-9 * (1.0 + abs(f_x) + abs(f_p)):
                    tau_ok = False
            if dyz > 0:
                g_z = surrogate_gradient(spec, problem, i, xi, z, gz)
                l_tilde = max(l_tilde, float(np.linalg.norm(g_x - g_z)) / dyz)
    return ConstantsReport(tau_ok=tau_ok, l_tilde_observed=l_tilde, l_block_observed=l_block)
