"""Numerically robust kernels for the binomial, hypergeometric, and
multivariate hypergeometric distributions.

Probability mass is evaluated in log space through a shared, cached
log-factorial table; cumulative sums are accumulated in linear space.
The binomial CDF goes through the regularized incomplete beta function,
which sums the smaller tail internally and stays accurate far out in
either tail.

Quantile functions follow the convention ``smallest k in the support
with CDF(k) >= q``.  ``q = 0`` maps to the bottom of the support, so a
zero tail level always yields the full support as an interval.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc, gammaln

__all__ = [
    "LogWeight",
    "MHypParams",
    "binom_cdf",
    "binom_cdf_table",
    "binom_logpmf",
    "binom_quantile",
    "binom_sf_table",
    "hyper_cdf",
    "hyper_cdf_table",
    "hyper_logpmf",
    "hyper_quantile",
    "hyper_sf_table",
    "hyper_support",
    "log_choose",
    "log_factorial_table",
    "mhyper_logpmf",
    "mhyper_pmf",
]

LogWeight = float
"""Natural-log probability mass; ``-inf`` encodes zero mass."""

_table_lock = threading.Lock()
_log_factorial = gammaln(np.arange(2, dtype=np.float64) + 1.0)
_log_factorial.setflags(write=False)


def log_factorial_table(n: int) -> np.ndarray:
    """Read-only array ``t`` with ``t[k] = log(k!)`` for ``k = 0..n``.

    The table is cached at module level and grown geometrically, sized to
    the largest population seen so far.
    """
    if n < 0:
        raise ValueError("table size must be nonnegative")
    global _log_factorial
    table = _log_factorial
    if n < table.shape[0]:
        return table
    with _table_lock:
        table = _log_factorial
        if n >= table.shape[0]:
            size = max(n + 1, 2 * table.shape[0])
            table = gammaln(np.arange(size, dtype=np.float64) + 1.0)
            table.setflags(write=False)
            _log_factorial = table
    return table


def log_choose(n, k) -> np.ndarray:
    """Elementwise ``log C(n, k)``; ``-inf`` outside ``0 <= k <= n``."""
    n = np.asarray(n, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    table = log_factorial_table(int(n.max(initial=0)))
    valid = (n >= 0) & (k >= 0) & (k <= n)
    nn = np.where(valid, n, 0)
    kk = np.where(valid, k, 0)
    out = table[nn] - table[kk] - table[nn - kk]
    return np.where(valid, out, -np.inf)


def _check_prob(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def _check_count(value: int, name: str) -> int:
    if int(value) != value or value < 0:
        raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# binomial


def binom_logpmf(k, n, p: float) -> np.ndarray:
    """Elementwise log of the Binomial(n, p) mass at k.

    ``k`` and ``n`` broadcast; invalid counts get ``-inf``.  The edge
    rates ``p = 0`` and ``p = 1`` are handled as point masses.
    """
    p = _check_prob(p, "p")
    k = np.asarray(k, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    if p == 0.0:
        return np.where((k == 0) & (n >= 0), 0.0, -np.inf)
    if p == 1.0:
        return np.where((k == n) & (n >= 0), 0.0, -np.inf)
    lc = log_choose(n, k)
    kk = np.where(np.isfinite(lc), k, 0)
    nn = np.where(np.isfinite(lc), n, 0)
    out = lc + kk * math.log(p) + (nn - kk) * math.log1p(-p)
    return np.where(np.isfinite(lc), out, -np.inf)


def binom_cdf(k, n: int, p: float) -> float:
    """``Pr(X <= k)`` for ``X ~ Binomial(n, p)``.

    Clamps to 0 below the support and to 1 at or above its top.
    """
    n = _check_count(n, "n")
    p = _check_prob(p, "p")
    k = math.floor(k)
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    return float(betainc(n - k, k + 1, 1.0 - p))


@lru_cache(maxsize=4096)
def binom_cdf_table(n: int, p: float) -> np.ndarray:
    """Read-only array ``c`` with ``c[k] = binom_cdf(k, n, p)``, k = 0..n."""
    n = _check_count(n, "n")
    p = _check_prob(p, "p")
    if n == 0:
        out = np.ones(1)
    else:
        k = np.arange(n, dtype=np.float64)
        cdf = betainc(n - k, k + 1.0, 1.0 - p)
        # enforce monotonicity against last-ulp wobble so that quantile
        # searches stay consistent with the scalar CDF
        cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
        out = np.append(cdf, 1.0)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=4096)
def binom_sf_table(n: int, p: float) -> np.ndarray:
    """Read-only array ``s`` with ``s[k] = Pr(X >= k)``, k = 0..n.

    Evaluated through the complement arguments of the incomplete beta
    function, so small upper tails keep full relative accuracy instead of
    collapsing to ``1 - 1.0``.
    """
    n = _check_count(n, "n")
    p = _check_prob(p, "p")
    if n == 0:
        out = np.ones(1)
    else:
        k = np.arange(1, n + 1, dtype=np.float64)
        sf = betainc(k, n - k + 1.0, p)
        sf = np.minimum.accumulate(np.clip(sf, 0.0, 1.0))
        out = np.concatenate(([1.0], sf))
    out.setflags(write=False)
    return out


def binom_quantile(q: float, n: int, p: float) -> int:
    """Smallest ``k`` in ``{0, ..., n}`` with ``binom_cdf(k, n, p) >= q``.

    ``q = 0`` returns 0, the bottom of the support.
    """
    q = _check_prob(q, "q")
    n = _check_count(n, "n")
    p = _check_prob(p, "p")
    if q <= 0.0:
        return 0
    table = binom_cdf_table(n, p)
    return int(np.searchsorted(table, q, side="left"))


# ---------------------------------------------------------------------------
# hypergeometric


def _check_hyper(succ: int, fail: int, draws: int) -> tuple[int, int, int]:
    succ = _check_count(succ, "successes")
    fail = _check_count(fail, "failures")
    draws = _check_count(draws, "draws")
    if draws > succ + fail:
        raise ValueError("draws exceed the population size")
    return succ, fail, draws


def hyper_support(succ: int, fail: int, draws: int) -> tuple[int, int]:
    """Inclusive support bounds ``(max(0, draws - fail), min(succ, draws))``."""
    succ, fail, draws = _check_hyper(succ, fail, draws)
    return max(0, draws - fail), min(succ, draws)


def hyper_logpmf(k, succ: int, fail: int, draws: int) -> np.ndarray:
    """Elementwise log mass of Hypergeometric(succ, fail, draws) at k."""
    succ, fail, draws = _check_hyper(succ, fail, draws)
    k = np.asarray(k, dtype=np.int64)
    return (
        log_choose(succ, k)
        + log_choose(fail, draws - k)
        - log_choose(succ + fail, draws)
    )


@lru_cache(maxsize=8192)
def _hyper_tables(succ: int, fail: int, draws: int):
    lo, hi = max(0, draws - fail), min(succ, draws)
    k = np.arange(lo, hi + 1, dtype=np.int64)
    pmf = np.exp(np.asarray(hyper_logpmf(k, succ, fail, draws)))
    cdf = np.minimum(np.cumsum(pmf), 1.0)
    cdf[-1] = 1.0
    sf = np.minimum(np.cumsum(pmf[::-1])[::-1], 1.0)
    sf[0] = 1.0
    for arr in (pmf, cdf, sf):
        arr.setflags(write=False)
    return lo, hi, pmf, cdf, sf


def hyper_cdf_table(succ: int, fail: int, draws: int) -> np.ndarray:
    """Read-only CDF over the support, indexed from ``hyper_support(...)[0]``."""
    succ, fail, draws = _check_hyper(succ, fail, draws)
    return _hyper_tables(succ, fail, draws)[3]


def hyper_sf_table(succ: int, fail: int, draws: int) -> np.ndarray:
    """Read-only array of ``Pr(X >= k)`` over the support."""
    succ, fail, draws = _check_hyper(succ, fail, draws)
    return _hyper_tables(succ, fail, draws)[4]


def hyper_cdf(k, succ: int, fail: int, draws: int) -> float:
    """``Pr(X <= k)`` for ``X ~ Hypergeometric(succ, fail, draws)``.

    Clamps outside the support: 0 below it, 1 at or above its top.
    """
    succ, fail, draws = _check_hyper(succ, fail, draws)
    k = math.floor(k)
    lo, hi, _, cdf, _ = _hyper_tables(succ, fail, draws)
    if k < lo:
        return 0.0
    if k >= hi:
        return 1.0
    return float(cdf[k - lo])


def hyper_quantile(q: float, succ: int, fail: int, draws: int) -> int:
    """Smallest ``k`` in the support with ``hyper_cdf(k, ...) >= q``.

    ``q = 0`` returns the bottom of the support, which is
    ``max(0, draws - fail)`` rather than 0 when draws exceed failures.
    """
    q = _check_prob(q, "q")
    succ, fail, draws = _check_hyper(succ, fail, draws)
    lo, hi, _, cdf, _ = _hyper_tables(succ, fail, draws)
    if q <= 0.0:
        return lo
    return lo + int(np.searchsorted(cdf, q, side="left"))


# ---------------------------------------------------------------------------
# multivariate hypergeometric


@dataclass(frozen=True)
class MHypParams:
    """Population sizes per category and the number of draws without
    replacement."""

    populations: tuple[int, ...]
    draws: int

    def __post_init__(self):
        pops = tuple(int(p) for p in self.populations)
        if len(pops) == 0:
            raise ValueError("at least one population category is required")
        if any(p < 0 for p in pops):
            raise ValueError("population sizes must be nonnegative")
        draws = _check_count(self.draws, "draws")
        if draws > sum(pops):
            raise ValueError("draws exceed the total population size")
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "draws", draws)


def mhyper_logpmf(counts, params: MHypParams) -> LogWeight:
    """Log mass of jointly drawing ``counts`` from the categories."""
    counts = tuple(int(c) for c in counts)
    if len(counts) != len(params.populations):
        raise ValueError("counts and populations differ in length")
    if any(c < 0 for c in counts):
        raise ValueError("counts must be nonnegative")
    if any(c > p for c, p in zip(counts, params.populations)):
        raise ValueError("counts exceed their population sizes")
    if sum(counts) != params.draws:
        raise ValueError("counts must sum to the number of draws")
    num = np.asarray(log_choose(np.array(params.populations), np.array(counts)))
    den = float(log_choose(sum(params.populations), params.draws))
    return float(num.sum() - den)


def mhyper_pmf(counts, params: MHypParams) -> float:
    """Mass of jointly drawing ``counts`` from the categories."""
    return math.exp(mhyper_logpmf(counts, params))
