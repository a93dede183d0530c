"""Autocorrelation handling for rank-based uniformity checks.

Dependent draws bias extreme order statistics towards the center, which
inflates the rejection rate of the band tests.  This module provides a
stationary AR(1) generator for experiments, effective-sample-size
estimates (plain, rank-normalized bulk, tail-indicator, and 19-quantile
indicator variants), and thinning strategies that pick a keep-every-T
factor from them.

The ESS estimator follows the multi-chain autocovariance recipe with
Geyer's initial-monotone-sequence truncation: chains are demeaned
individually, per-lag autocovariances are averaged across chains, and
correlations are accumulated in consecutive pairs until a pair sum goes
nonpositive, with pair sums additionally forced nonincreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri
from scipy.stats import rankdata

from .transform import ChainSet

__all__ = [
    "STRATEGIES",
    "EssReport",
    "ThinningPlan",
    "ar1_simulate",
    "ess_report",
    "thin",
    "thinning_factor",
]

STRATEGIES = ("MEAN_ESS", "QUANTILE_19", "BULK_TAIL_MIN")
_QUANTILES = tuple(np.round(np.arange(1, 20) * 0.05, 2))
_LAG_BLOCK = 64


@dataclass(frozen=True)
class EssReport:
    """Effective sample sizes of one set of chains.

    ``ess_mean`` targets the plain mean, ``ess_bulk`` the rank-normalized
    draws, ``ess_tail`` the harder of the 5% and 95% tail indicators, and
    ``ess_quantiles`` the indicators at the 19 quantiles 0.05, ..., 0.95.
    """

    ess_mean: float
    ess_bulk: float
    ess_tail: float
    ess_quantiles: tuple[float, ...]
    n_total: int

    def __post_init__(self):
        values = (self.ess_mean, self.ess_bulk, self.ess_tail, *self.ess_quantiles)
        if len(self.ess_quantiles) != 19:
            raise ValueError("expected 19 quantile ESS values")
        cap = self.n_total * max(1.0, math.log10(self.n_total))
        for v in values:
            if not 0.0 < v <= cap * (1.0 + 1e-9):
                raise ValueError("ESS values must be positive and below the cap")


@dataclass(frozen=True)
class ThinningPlan:
    strategy: str
    factor: int
    n_total: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.factor < 1:
            raise ValueError("thinning factor must be at least 1")

    @property
    def resulting_length(self) -> int:
        """Draws surviving when ``n_total`` draws are kept every
        ``factor`` steps starting from the first (so the count rounds
        up, matching slice semantics)."""
        return -(-self.n_total // self.factor)


def ar1_simulate(phi: float, n: int, chains: int = 1, seed: int = 0) -> ChainSet:
    """Stationary AR(1) chains with standard normal marginals.

    x_t = phi * x_{t-1} + eps_t with x_0 drawn from the stationary
    distribution, then scaled so every margin has unit variance.
    """
    phi = float(phi)
    if not -1.0 < phi < 1.0:
        raise ValueError("phi must lie strictly inside (-1, 1)")
    if n < 1 or chains < 1:
        raise ValueError("n and chains must be positive")
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((chains, n))
    x0 = rng.standard_normal(chains) / math.sqrt(1.0 - phi * phi)
    out, _ = lfilter([1.0], [1.0, -phi], eps, axis=1, zi=(phi * x0)[:, None])
    return ChainSet(out * math.sqrt(1.0 - phi * phi))


def _ess_core(x: np.ndarray) -> float:
    """ESS of the mean of possibly autocorrelated equal-length chains."""
    m, n = x.shape
    total = m * n
    chain_means = x.mean(axis=1)
    xc = x - chain_means[:, None]
    mean_var = float((xc * xc).sum() / (m * (n - 1)))
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += float(np.var(chain_means, ddof=1))
    if var_plus <= 0.0:
        return float(total)
    cap = n // 2
    acov = np.full(cap + 2, np.nan)

    def rho(t: int) -> float:
        if t == 0:
            return 1.0
        if t > cap:
            return 0.0
        if np.isnan(acov[t]):
            for s in range(t, min(t + _LAG_BLOCK, cap) + 1):
                if np.isnan(acov[s]):
                    acov[s] = float((xc[:, : n - s] * xc[:, s:]).sum()) / total
        return 1.0 - (mean_var - acov[t]) / var_plus

    stored = np.zeros(cap + 2)
    stored[0] = 1.0
    stored[1] = rho(1)
    rho_even, rho_odd = stored[0], stored[1]
    t = 0
    while t < cap - 4 and rho_even + rho_odd > 0.0:
        t += 2
        rho_even, rho_odd = rho(t), rho(t + 1)
        if rho_even + rho_odd >= 0.0:
            stored[t] = rho_even
            stored[t + 1] = rho_odd
    max_t = t
    if rho_even > 0.0:
        stored[max_t] = rho_even
    t = 0
    while t <= max_t - 4:
        t += 2
        prev = stored[t - 2] + stored[t - 1]
        if stored[t] + stored[t + 1] > prev:
            stored[t] = prev / 2.0
            stored[t + 1] = prev / 2.0
    tau = -1.0 + 2.0 * float(stored[:max_t].sum()) + float(stored[max_t])
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    """Average ranks over the pooled draws mapped through the normal
    quantile function, using the standard continuity offsets."""
    ranks = rankdata(x.ravel(), method="average")
    z = ndtri((ranks - 0.375) / (ranks.size + 0.25))
    return z.reshape(x.shape)


def ess_report(chains) -> EssReport:
    """All ESS variants used by the thinning strategies."""
    cs = chains if isinstance(chains, ChainSet) else ChainSet(chains)
    x = cs.chains
    if cs.n_draws < 8:
        raise ValueError("chains must have at least 8 draws")
    total = x.size
    ess_mean = _ess_core(x)
    ess_bulk = _ess_core(_rank_normalize(x))
    qs = np.quantile(x, _QUANTILES)
    ess_q = tuple(_ess_core((x <= q).astype(np.float64)) for q in qs)
    ess_tail = min(ess_q[0], ess_q[-1])
    return EssReport(ess_mean, ess_bulk, ess_tail, ess_q, total)


def thinning_factor(report: EssReport, n_total: int, strategy: str = "BULK_TAIL_MIN") -> ThinningPlan:
    """Keep-every-T factor from an ESS report.

    MEAN_ESS thins by the plain-mean ESS; QUANTILE_19 by the smallest of
    the 19 quantile-indicator ESS values (the largest factor); and
    BULK_TAIL_MIN by the smaller of bulk and tail ESS.  The factor
    rounds up, since thinning too little leaves inflated rejection
    rates while thinning too much only loses draws.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    if n_total < 1:
        raise ValueError("n_total must be positive")
    if strategy == "MEAN_ESS":
        ess = report.ess_mean
    elif strategy == "QUANTILE_19":
        ess = min(report.ess_quantiles)
    else:
        ess = min(report.ess_bulk, report.ess_tail)
    factor = max(1, math.ceil(n_total / ess))
    return ThinningPlan(strategy, factor, n_total)


def thin(chains, factor: int) -> ChainSet:
    """Keep every factor-th draw per chain, starting from the first."""
    cs = chains if isinstance(chains, ChainSet) else ChainSet(chains)
    factor = int(factor)
    if factor < 1:
        raise ValueError("thinning factor must be at least 1")
    return ChainSet(cs.chains[:, ::factor])
