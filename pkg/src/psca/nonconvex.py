"""Box-constrained, l1-regularized indefinite quadratics.

``f(x) = 0.5 x'(A'A - mu I)x + c'x`` with ``mu`` chosen so the smallest
eigenvalue of the Hessian equals ``-neg_curvature``; ``g = lam ||x||_1`` and
``X = [-1, 1]^n`` on scalar blocks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .problem import BlockLayout, L1Box, Problem, QuadraticForm


@dataclass
class NonconvexInstance:
    problem: Problem
    hessian: np.ndarray
    c: np.ndarray
    mu: float
    seed: int


def generate_nonconvex_qp(n=200, neg_curvature=0.5, lam=0.1, bound=1.0, seed=0):
    """Seeded instance with ``lambda_min(H) = -neg_curvature`` (up to eigensolver roundoff)."""
    if n < 1:
        raise InvalidArgumentError("n must be positive")
    if neg_curvature < 0 or lam < 0 or not bound > 0:
        raise InvalidArgumentError("neg_curvature and lam must be nonnegative, bound positive")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) / np.sqrt(n)
    gram = a.T @ a
    mu = float(np.linalg.eigvalsh(gram)[0]) + neg_curvature
    h = gram - mu * np.eye(n)
    h = 0.5 * (h + h.T)
    c = rng.standard_normal(n)
    smooth = QuadraticForm(h, c)
    lf = max(abs(smooth.eig_min), abs(smooth.eig_max))
    problem = Problem(BlockLayout.uniform(n), smooth, L1Box(lam, -bound, bound), lf)
    return NonconvexInstance(problem, h, c, mu, int(seed))
