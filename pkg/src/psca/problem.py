"""Composite problems ``min f(x) + sum_i g_i(x_i)`` over block-partitioned vectors.

A :class:`Problem` bundles a smooth part (value and gradient oracles), a
block-separable nonsmooth part whose proximal map already includes the
block's constraint set, and a :class:`BlockLayout`. Block indices are
0-based throughout.

Smooth parts that are quadratic expose extra structure (curvatures, Hessian
blocks, an incremental cache) that the solvers use for closed-form block
solves and cheap per-iteration updates.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import InvalidArgumentError


class BlockLayout:
    """Block sizes ``m_i`` and their offsets into the flat variable vector."""

    def __init__(self, dims):
        dims = np.asarray(dims, dtype=np.int64)
        if dims.ndim != 1 or dims.size < 1:
            raise InvalidArgumentError("a layout needs at least one block")
        if np.any(dims < 1):
            raise InvalidArgumentError("block sizes must be positive")
        self.dims = dims
        self.offsets = np.concatenate(([0], np.cumsum(dims))).astype(np.int64)
        self.n = int(dims.size)
        self.total_dim = int(self.offsets[-1])
        self.is_scalar = bool(np.all(dims == 1))

    @classmethod
    def uniform(cls, total_dim, block_size=1):
        """Contiguous blocks of ``block_size`` coordinates, last one possibly shorter."""
        if block_size < 1 or total_dim < 1:
            raise InvalidArgumentError("block_size and total_dim must be positive")
        full, rest = divmod(total_dim, block_size)
        dims = [block_size] * full + ([rest] if rest else [])
        return cls(dims)

    def block(self, i):
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def coords(self, blocks):
        """Flat coordinate indices of ``blocks``, in block order."""
        blocks = np.asarray(blocks, dtype=np.int64)
        if self.is_scalar:
            return blocks
        return np.concatenate([np.arange(self.offsets[i], self.offsets[i + 1]) for i in blocks])

    def expand(self, per_block, blocks):
        """Repeat one value per block across that block's coordinates."""
        blocks = np.asarray(blocks, dtype=np.int64)
        vals = np.broadcast_to(np.asarray(per_block, dtype=float), blocks.shape)
        if self.is_scalar:
            return np.ascontiguousarray(vals)
        return np.repeat(vals, self.dims[blocks])

    def __eq__(self, other):
        return isinstance(other, BlockLayout) and np.array_equal(self.dims, other.dims)

    def __repr__(self):
        return f"BlockLayout(n={self.n}, total_dim={self.total_dim})"


# ---------------------------------------------------------------------------
# Smooth parts
# ---------------------------------------------------------------------------


class SmoothFunction:
    """Smooth part given by plain callables; no structure beyond the oracles."""

    is_quadratic = False
    incremental = False

    def __init__(self, value, gradient):
        self._value = value
        self._gradient = gradient

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)


class LeastSquares:
    """``f(x) = 0.5 * ||A x - b||^2`` for dense or sparse ``A``.

    The incremental cache is the residual ``A x - b``; selected columns are
    read through the compiled kernels.
    """

    is_quadratic = True
    incremental = True
    is_psd = True

    def __init__(self, a, b):
        self.b = np.ascontiguousarray(b, dtype=float)
        if sp.issparse(a):
            self.a = sp.csr_matrix(a, dtype=float)
            csc = sp.csc_matrix(a, dtype=float)
            csc.sort_indices()
            self._csc = (
                np.ascontiguousarray(csc.data),
                np.ascontiguousarray(csc.indices, dtype=np.int64),
                np.ascontiguousarray(csc.indptr, dtype=np.int64),
            )
            self._dense = None
            self.colsq = np.asarray(csc.multiply(csc).sum(axis=0)).ravel()
        else:
            self.a = np.asarray(a, dtype=float)
            self._dense = np.asfortranarray(self.a)
            self._csc = None
            self.colsq = np.einsum("ij,ij->j", self._dense, self._dense)
        if self.a.shape[0] != self.b.shape[0]:
            raise InvalidArgumentError("A and b disagree on the number of rows")
        self.shape = self.a.shape

    @property
    def is_sparse(self):
        return self._csc is not None

    def value(self, x):
        r = self.a @ x - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x):
        return np.asarray(self.a.T @ (self.a @ x - self.b)).ravel()

    def hessian_matvec(self, v):
        return np.asarray(self.a.T @ (self.a @ v)).ravel()

    def curvature(self):
        """Diagonal of ``A'A``."""
        return self.colsq

    def hessian_block(self, coords):
        cols = self.a[:, coords]
        if sp.issparse(cols):
            cols = cols.toarray()
        return cols.T @ cols

    # incremental interface -------------------------------------------------
    def init_cache(self, x):
        return np.ascontiguousarray(self.a @ x - self.b, dtype=float)

    def cache_value(self, cache, x):
        return 0.5 * float(cache @ cache)

    def cache_gradient(self, cache):
        return np.asarray(self.a.T @ cache).ravel()

    def cache_coord_gradient(self, cache, coords):
        out = np.empty(coords.shape[0])
        if self._dense is not None:
            return kernels.gather_dot(self._dense, coords, cache, out)
        data, indices, indptr = self._csc
        return kernels.gather_dot_csc(data, indices, indptr, coords, cache, out)

    def cache_update(self, cache, coords, delta):
        if self._dense is not None:
            kernels.scatter_axpy(self._dense, coords, delta, cache)
        else:
            data, indices, indptr = self._csc
            kernels.scatter_axpy_csc(data, indices, indptr, coords, delta, cache)


class QuadraticForm:
    """``f(x) = 0.5 x'Hx + c'x`` with dense symmetric ``H`` (possibly indefinite).

    The incremental cache is the gradient ``Hx + c``.
    """

    is_quadratic = True
    incremental = True

    def __init__(self, h, c):
        h = np.asarray(h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise InvalidArgumentError("H must be square")
        if not np.allclose(h, h.T, rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
            raise InvalidArgumentError("H must be symmetric")
        self.h = np.asfortranarray(0.5 * (h + h.T))
        self.c = np.ascontiguousarray(c, dtype=float)
        eig = np.linalg.eigvalsh(self.h)
        self.eig_min, self.eig_max = float(eig[0]), float(eig[-1])
        self.is_psd = self.eig_min >= 0.0

    def value(self, x):
        return 0.5 * float(x @ (self.h @ x)) + float(self.c @ x)

    def gradient(self, x):
        return self.h @ x + self.c

    def hessian_matvec(self, v):
        return self.h @ v

    def curvature(self):
        return np.diagonal(self.h).copy()

    def hessian_block(self, coords):
        return self.h[np.ix_(coords, coords)]

    def hessian_row_norms(self):
        return np.sqrt(np.einsum("ij,ij->j", self.h, self.h))

    def init_cache(self, x):
        return np.ascontiguousarray(self.h @ x + self.c)

    def cache_value(self, cache, x):
        return 0.5 * float(x @ (cache + self.c))

    def cache_gradient(self, cache):
        return cache.copy()

    def cache_coord_gradient(self, cache, coords):
        return cache[coords]

    def cache_update(self, cache, coords, delta):
        kernels.scatter_axpy(self.h, coords, delta, cache)


# ---------------------------------------------------------------------------
# Nonsmooth parts
# ---------------------------------------------------------------------------


class L1Box:
    """``g_i(x_i) = lam * ||x_i||_1`` restricted to ``lower <= x <= upper``.

    The joint prox is coordinatewise: soft-threshold then clip, which is exact
    because each coordinate subproblem is a one-dimensional convex problem.
    """

    coordinatewise = True

    def __init__(self, lam, lower=-np.inf, upper=np.inf):
        if lam < 0:
            raise InvalidArgumentError("lam must be nonnegative")
        if not lower <= upper:
            raise InvalidArgumentError("empty box")
        self.lam = float(lam)
        self.lower = float(lower)
        self.upper = float(upper)

    def value(self, x):
        return self.lam * float(np.abs(x).sum())

    def block_value(self, i, xi):
        return self.lam * float(np.abs(xi).sum())

    def prox(self, i, z, t):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.empty_like(z)
        return kernels.prox_l1_box(z, np.full(z.shape, t * self.lam), self.lower, self.upper, out)

    def prox_coords(self, z, t):
        """Vectorized prox over coordinates, ``t`` a per-coordinate array."""
        out = np.empty_like(z)
        return kernels.prox_l1_box(z, t * self.lam, self.lower, self.upper, out)

    def is_feasible(self, i, xi, tol=1e-10):
        return bool(np.all(xi >= self.lower - tol) and np.all(xi <= self.upper + tol))

    def lipschitz(self, layout):
        """Lipschitz constant of ``g`` w.r.t. the Euclidean norm."""
        return self.lam * np.sqrt(layout.total_dim)

    def initial_point(self, layout):
        return np.clip(np.zeros(layout.total_dim), self.lower, self.upper)


class BlockFunctions:
    """Arbitrary per-block ``(value, prox)`` callables.

    ``values[i](x_i)`` returns ``g_i(x_i)``; ``proxes[i](z, t)`` returns the
    minimizer over ``X_i`` of ``g_i(u) + ||u - z||^2 / (2t)``. Convexity of
    every ``g_i`` is the caller's contract.
    """

    coordinatewise = False

    def __init__(self, values, proxes, feasible=None, lipschitz=None):
        if len(values) != len(proxes):
            raise InvalidArgumentError("values and proxes must have one entry per block")
        self.values = list(values)
        self.proxes = list(proxes)
        self.feasible = feasible
        self._lipschitz = lipschitz
        self._layout = None

    def bind(self, layout):
        if len(self.values) != layout.n:
            raise InvalidArgumentError("one (value, prox) pair per block is required")
        self._layout = layout

    def value(self, x):
        lay = self._layout
        return float(sum(self.values[i](x[lay.block(i)]) for i in range(lay.n)))

    def block_value(self, i, xi):
        return float(self.values[i](xi))

    def prox(self, i, z, t):
        return np.atleast_1d(np.asarray(self.proxes[i](np.asarray(z, dtype=float), t), dtype=float))

    def is_feasible(self, i, xi, tol=1e-10):
        if self.feasible is None:
            return np.allclose(self.prox(i, xi, 1e-300), xi, rtol=0, atol=tol)
        return bool(self.feasible(i, xi))

    def lipschitz(self, layout):
        return self._lipschitz

    def initial_point(self, layout):
        return np.concatenate([self.prox(i, np.zeros(layout.dims[i]), 1.0) for i in range(layout.n)])


# ---------------------------------------------------------------------------
# Problem and iterate
# ---------------------------------------------------------------------------


class Problem:
    """Composite problem over a block layout.

    Parameters
    ----------
    layout : BlockLayout
    smooth : LeastSquares, QuadraticForm or SmoothFunction
    nonsmooth : L1Box or BlockFunctions
    lipschitz_grad_hint : float, optional
        Estimate of the Lipschitz constant of ``grad f``.
    """

    def __init__(self, layout, smooth, nonsmooth, lipschitz_grad_hint=None):
        self.layout = layout
        self.smooth = smooth
        self.nonsmooth = nonsmooth
        if hasattr(nonsmooth, "bind"):
            nonsmooth.bind(layout)
        if lipschitz_grad_hint is not None and lipschitz_grad_hint < 0:
            raise InvalidArgumentError("lipschitz_grad_hint must be nonnegative")
        self.lipschitz_grad_hint = lipschitz_grad_hint

    @property
    def n(self):
        return self.layout.n

    @property
    def total_dim(self):
        return self.layout.total_dim

    @property
    def is_quadratic(self):
        return bool(getattr(self.smooth, "is_quadratic", False))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.layout.total_dim,):
            raise InvalidArgumentError(
                f"expected a vector of length {self.layout.total_dim}, got shape {x.shape}"
            )
        return x

    def objective(self, x):
        x = self._check(x)
        return self.smooth.value(x) + self.nonsmooth.value(x)

    def gradient(self, x):
        return self.smooth.gradient(self._check(x))

    def block_prox(self, i, z, t):
        if not t > 0:
            raise InvalidArgumentError("prox step t must be positive")
        if not 0 <= i < self.layout.n:
            raise InvalidArgumentError(f"block index {i} out of range")
        return self.nonsmooth.prox(i, z, t)

    def prox_blocks(self, blocks, z, t_per_block):
        """Prox of several blocks at once; ``z`` holds their coordinates in order."""
        lay = self.layout
        if getattr(self.nonsmooth, "coordinatewise", False):
            return self.nonsmooth.prox_coords(z, lay.expand(t_per_block, blocks))
        out = np.empty_like(z)
        pos = 0
        for i, t in zip(blocks, np.broadcast_to(t_per_block, len(blocks))):
            d = int(lay.dims[i])
            out[pos:pos + d] = self.nonsmooth.prox(int(i), z[pos:pos + d], float(t))
            pos += d
        return out

    def is_feasible(self, x, tol=1e-10):
        lay = self.layout
        return all(self.nonsmooth.is_feasible(i, x[lay.block(i)], tol) for i in range(lay.n))

    def initial_point(self):
        return self.nonsmooth.initial_point(self.layout)


@dataclass
class Iterate:
    x: np.ndarray
    r: int = 0


def evaluate_objective(problem, x):
    """``h(x) = f(x) + sum_i g_i(x_i)``."""
    return problem.objective(x)


def evaluate_smooth_gradient(problem, x):
    return problem.gradient(x)


def block_prox(problem, i, z, t):
    """``argmin_{u in X_i} g_i(u) + ||u - z||^2 / (2t)``."""
    return problem.block_prox(i, z, t)


def check_convexity(problem, trials=100, rng=None, scale=3.0):
    """Midpoint convexity spot check of every ``g_i``; returns the worst violation."""
    rng = np.random.default_rng(rng)
    lay = problem.layout
    worst = 0.0
    for _ in range(trials):
        i = int(rng.integers(lay.n))
        d = int(lay.dims[i])
        a = problem.block_prox(i, scale * rng.standard_normal(d), 1e-12)
        b = problem.block_prox(i, scale * rng.standard_normal(d), 1e-12)
        g = problem.nonsmooth.block_value
        gap = g(i, 0.5 * (a + b)) - 0.5 * (g(i, a) + g(i, b))
        worst = max(worst, gap)
    return worst
