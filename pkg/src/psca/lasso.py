"""Lasso instances with a planted, KKT-certified optimum.

The generator builds ``A`` from a Gaussian base matrix ``B`` and a unit
vector ``u`` so that ``A'u`` is a prescribed vector ``t`` with
``t_j = lam * sign(x*_j)`` on the support and ``|t_j| <= 0.9 lam`` off it.
Setting ``b = A x* + u`` then gives ``A'(A x* - b) = -t``, which is exactly
the Lasso optimality condition at ``x*``.

Two constructions are offered:

``"rescale"``
    Scale column ``j`` of ``B`` by ``|t_j| / |v_j|`` where ``v = B'u``.
    Works with sparse ``B`` but the column scales spread over orders of
    magnitude, so ``A'A`` is badly conditioned.
``"shift"`` (default)
    ``A = B + u (t - v)'``, a rank-one correction of ``B``. Keeps the
    conditioning of ``B``; needs a dense base matrix.
"""

import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError
from .problem import BlockLayout, L1Box, LeastSquares, Problem
from .spectral import power_iteration

DENSE_LIMIT = 10_000_000
# rescale: redraw column j of B when |v_j| < RESCALE_FLOOR * ||B_j||
RESCALE_FLOOR = 1e-2
MAGIC = b"PSCAINST"
FORMAT_VERSION = 1
_STORAGE = {0: "dense", 1: "csr"}
_METHODS = ("shift", "rescale")
# magic, version, storage, rows, cols, nnz, support, seed, lam, h_star, sparsity, density, method
_HEADER = struct.Struct("<8sIIqqqqqddddI")


def soft_threshold(z, t):
    """``sign(z) * max(|z| - t, 0)``; works elementwise on arrays."""
    if np.any(np.asarray(t) < 0):
        raise InvalidArgumentError("threshold must be nonnegative")
    out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class LassoInstance:
    """``min 0.5 ||A x - b||^2 + lam ||x||_1`` with certified optimum ``x_star``."""

    a_matrix: object
    b: np.ndarray
    lam: float
    x_star: np.ndarray
    h_star: float
    support_size: int
    seed: int
    sparsity: float = 0.0
    density: float = 1.0
    method: str = "shift"
    _hash: str | None = field(default=None, repr=False, compare=False)

    @property
    def shape(self):
        return self.a_matrix.shape

    @property
    def storage(self):
        return "csr" if sp.issparse(self.a_matrix) else "dense"

    def objective(self, x):
        r = self.a_matrix @ x - self.b
        return 0.5 * float(r @ r) + self.lam * float(np.sum(np.abs(x)))

    def gradient(self, x):
        return np.asarray(self.a_matrix.T @ (self.a_matrix @ x - self.b)).ravel()

    def to_bytes(self):
        buf = io.BytesIO()
        write_instance(self, buf)
        return buf.getvalue()

    @property
    def instance_hash(self):
        """SHA-256 of the binary container (hex)."""
        if self._hash is None:
            self._hash = hashlib.sha256(self.to_bytes()).hexdigest()
        return self._hash


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _sparse_base(rows, cols, density, rng):
    base = sp.random(rows, cols, density=density, format="csc", random_state=rng,
                     data_rvs=rng.standard_normal)
    empty = np.flatnonzero(np.diff(base.indptr) == 0)
    if empty.size:
        fill = sp.csc_matrix(
            (rng.standard_normal(empty.size), (rng.integers(0, rows, empty.size), empty)),
            shape=(rows, cols),
        )
        base = (base + fill).tocsc()
    base.sort_indices()
    return base


def generate_nesterov(rows, cols, sparsity, lam=1.0, seed=0, method="shift", density=1.0):
    """Random Lasso instance whose optimum is planted through the KKT conditions.

    Parameters
    ----------
    rows, cols : int
        Shape of ``A``.
    sparsity : float
        Fraction of nonzeros in ``x*``; the support has ``floor(sparsity * cols)``
        entries.
    lam : float
        Regularization weight.
    seed : int
    method : {"shift", "rescale"}
        How ``B`` is turned into ``A`` (see the module docstring).
    density : float
        Fill of the base matrix; below 1 only with ``method="rescale"``.

    Returns
    -------
    LassoInstance
    """
    if rows < 1 or cols < 1:
        raise InvalidArgumentError("rows and cols must be positive")
    if not lam > 0:
        raise InvalidArgumentError("lambda must be positive")
    if method not in _METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}")
    if not 0 < density <= 1:
        raise InvalidArgumentError("density must lie in (0, 1]")
    if method == "shift" and density < 1:
        raise InvalidArgumentError("the shift construction needs a dense base matrix")
    support_size = int(np.floor(sparsity * cols))
    if not sparsity > 0 or support_size < 1 or support_size > cols:
        raise InvalidArgumentError(f"sparsity {sparsity} gives an empty or oversized support")

    rng = np.random.default_rng(seed)
    sparse_base = density < 1
    if sparse_base:
        base = _sparse_base(rows, cols, density, rng)
    else:
        base = rng.standard_normal((rows, cols))
    u = rng.standard_normal(rows)
    u /= np.linalg.norm(u)
    v = np.asarray(base.T @ u).ravel()

    if method == "rescale":
        # Columns nearly orthogonal to u would need huge scale factors, which
        # amplify roundoff in the certificate; redraw them.
        for _ in range(1000):
            norms = np.sqrt(np.asarray(base.multiply(base).sum(axis=0)).ravel()) if sparse_base \
                else np.linalg.norm(base, axis=0)
            bad = np.flatnonzero((np.abs(v) < 1e-12) | (np.abs(v) < RESCALE_FLOOR * norms))
            if bad.size == 0:
                break
            if sparse_base:
                base = base.tolil()
                for j in bad:
                    base[:, j] = 0.0
                    base[rng.integers(0, rows), j] = rng.standard_normal()
                base = base.tocsc()
            else:
                base[:, bad] = rng.standard_normal((rows, bad.size))
            v = np.asarray(base.T @ u).ravel()
        else:
            raise InvalidArgumentError("could not draw columns with nonzero correlation")

    support = np.sort(rng.choice(cols, size=support_size, replace=False))
    on = np.zeros(cols, dtype=bool)
    on[support] = True
    theta = rng.uniform(0.0, 0.9, size=cols)
    xi = rng.uniform(0.1, 1.0, size=support_size)
    sign = np.where(v >= 0, 1.0, -1.0)
    t = sign * lam * np.where(on, 1.0, theta)
    x_star = np.zeros(cols)
    x_star[support] = sign[support] * xi

    if method == "rescale":
        scale = np.abs(t) / np.abs(v)
        a = base @ sp.diags(scale) if sparse_base else base * scale
    else:
        a = base + np.outer(u, t - v)

    if sp.issparse(a) or rows * cols >= DENSE_LIMIT:
        a = sp.csr_matrix(a)
        a.sort_indices()
    b = np.asarray(a @ x_star).ravel() + u
    inst = LassoInstance(a, b, float(lam), x_star, 0.0, support_size, int(seed),
                         float(sparsity), float(density), method)
    inst.h_star = inst.objective(x_star)
    return inst


# ---------------------------------------------------------------------------
# Certification and adaptation
# ---------------------------------------------------------------------------


def certify_kkt(instance, x, tol=None):
    """Largest violation of the Lasso optimality conditions at ``x``.

    With ``g = A'(A x - b)`` this is the max over ``j`` of
    ``|g_j + lam * sign(x_j)|`` for ``x_j != 0`` and ``max(|g_j| - lam, 0)``
    otherwise. ``tol`` is accepted for symmetry with callers and unused.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.shape[1],):
        raise InvalidArgumentError("x has the wrong length")
    g = instance.gradient(x)
    lam = instance.lam
    nz = x != 0
    res = np.where(nz, np.abs(g + lam * np.sign(x)), np.maximum(np.abs(g) - lam, 0.0))
    return float(np.max(res))


def lasso_lipschitz(instance, tol=1e-12):
    """``lambda_max(A'A)`` by power iteration."""
    a = instance.a_matrix
    return power_iteration(lambda v: np.asarray(a.T @ (a @ v)).ravel(), instance.shape[1], tol=tol)


def as_problem(instance, block_size=1, lipschitz_grad_hint=None):
    """Wrap ``instance`` as a :class:`Problem` with ``l1`` blocks of ``block_size``."""
    layout = BlockLayout.uniform(instance.shape[1], block_size)
    hint = lasso_lipschitz(instance) if lipschitz_grad_hint is None else lipschitz_grad_hint
    return Problem(layout, LeastSquares(instance.a_matrix, instance.b), L1Box(instance.lam), hint)


# ---------------------------------------------------------------------------
# Binary container
# ---------------------------------------------------------------------------


def _le(arr, dtype):
    return np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def write_instance(inst, fh):
    rows, cols = inst.shape
    csr = sp.issparse(inst.a_matrix)
    nnz = inst.a_matrix.nnz if csr else rows * cols
    fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, int(csr), rows, cols, nnz, inst.support_size,
                          inst.seed, inst.lam, inst.h_star, inst.sparsity, inst.density,
                          _METHODS.index(inst.method)))
    if csr:
        a = inst.a_matrix
        fh.write(_le(a.indptr, np.int64))
        fh.write(_le(a.indices, np.int64))
        fh.write(_le(a.data, np.float64))
    else:
        fh.write(_le(inst.a_matrix.ravel(order="C"), np.float64))
    fh.write(_le(inst.b, np.float64))
    fh.write(_le(inst.x_star, np.float64))


def _metadata(inst):
    rows, cols = inst.shape
    return {
        "format_version": FORMAT_VERSION,
        "storage": inst.storage,
        "rows": rows,
        "cols": cols,
        "lambda": repr(inst.lam),
        "sparsity": repr(inst.sparsity),
        "density": repr(inst.density),
        "method": inst.method,
        "support_size": inst.support_size,
        "seed": inst.seed,
        "h_star": repr(inst.h_star),
        "sha256": inst.instance_hash,
    }


def save_instance(inst, path):
    """Write the binary container to ``path`` and a ``key=value`` sidecar to ``path.meta``."""
    data = inst.to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    meta = "".join(f"{k}={v}\n" for k, v in _metadata(inst).items())
    with open(f"{path}.meta", "w", encoding="utf-8") as fh:
        fh.write(meta)


def _read(fh, dtype, count):
    dt = np.dtype(dtype).newbyteorder("<")
    raw = fh.read(dt.itemsize * count)
    if len(raw) != dt.itemsize * count:
        raise InvalidArgumentError("truncated instance file")
    return np.frombuffer(raw, dtype=dt).astype(dtype)


def read_instance(fh):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise InvalidArgumentError("truncated instance header")
    (magic, version, storage, rows, cols, nnz, support, seed, lam, h_star, sparsity, density,
     method) = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise InvalidArgumentError("not a PSCA instance file")
    if version != FORMAT_VERSION:
        raise InvalidArgumentError(f"unsupported instance format version {version}")
    if storage not in _STORAGE or method >= len(_METHODS):
        raise InvalidArgumentError("corrupt instance header")
    if storage == 1:
        indptr = _read(fh, np.int64, rows + 1)
        indices = _read(fh, np.int64, nnz)
        data = _read(fh, np.float64, nnz)
        a = sp.csr_matrix((data, indices, indptr), shape=(rows, cols))
    else:
        a = _read(fh, np.float64, rows * cols).reshape(rows, cols)
    b = _read(fh, np.float64, rows)
    x_star = _read(fh, np.float64, cols)
    return LassoInstance(a, b, lam, x_star, h_star, support, seed, sparsity, density,
                         _METHODS[method])


def load_instance(path):
    with open(path, "rb") as fh:
        return read_instance(fh)
