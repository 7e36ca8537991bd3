import logging

import numpy as np

logger = logging.getLogger(__name__)


def power_iteration(matvec, dim, tol=1e-12, max_iter=50000, seed=0):
    """Largest eigenvalue of a symmetric positive semidefinite operator.

    Iterates ``v <- H v / ||H v||`` from a seeded Gaussian start and returns
    the Rayleigh quotient once its relative change drops below ``tol``.

    Parameters
    ----------
    matvec : callable
        ``v -> H v``.
    dim : int
        Operator dimension.

    Returns
    -------
    float
    """
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    rho = 0.0
    for it in range(max_iter):
        w = matvec(v)
        rho_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(rho_new - rho) <= tol * abs(rho_new):
            return rho_new
        rho = rho_new
    logger.warning("power iteration stopped at max_iter=%d", max_iter)
    return rho
