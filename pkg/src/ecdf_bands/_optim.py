"""Bounded scalar search for the band adjustment level.

Coverage as a function of the adjustment level is a nonincreasing step
function, so a smooth minimizer alone can stop anywhere inside a flat
step.  The search therefore runs a bounded Brent-style minimization
first and then probes neighbouring steps around the returned point,
keeping whichever step's coverage lands closest to the target.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar


def search_gamma(coverage_fn, alpha: float, tol: float = 1e-6, max_iter: int = 200):
    """Minimize ``|target - coverage(gamma)|`` over ``gamma in (0, alpha]``.

    Returns ``(gamma, coverage, evaluations)``.  ``coverage_fn`` must be
    nonincreasing in gamma; the target is ``1 - alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if tol <= 0.0 or max_iter < 1:
        raise ValueError("tolerance and iteration budget must be positive")
    target = 1.0 - alpha
    cache: dict[float, float] = {}

    def coverage(g: float) -> float:
        g = float(g)
        if g not in cache:
            cache[g] = float(coverage_fn(g))
        return cache[g]

    res = minimize_scalar(
        lambda g: abs(target - coverage(g)),
        bounds=(0.0, alpha),
        method="bounded",
        options={"xatol": tol, "maxiter": max_iter},
    )
    if not res.success:
        raise RuntimeError(
            f"gamma search did not converge within {max_iter} iterations: {res.message}"
        )
    best = float(res.x)

    # probe both directions at geometrically growing offsets so that a
    # stop inside one step cannot hide a closer neighbouring step
    candidates = [best]
    for factor in (1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0):
        for signed in (best - factor * tol, best + factor * tol):
            g = float(np.clip(signed, tol * 1e-3, alpha))
            if g > 0.0:
                candidates.append(g)

    def ranking(g: float):
        cov = coverage(g)
        # closest to target first; ties prefer the wider (more
        # conservative) band, which is the smaller gamma
        return (abs(target - cov), g)

    best = min(dict.fromkeys(candidates), key=ranking)
    return best, coverage(best), len(cache)
