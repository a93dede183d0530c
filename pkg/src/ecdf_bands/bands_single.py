"""Simultaneous confidence bands for the ECDF of a single uniform sample.

The bands are equal-tail binomial quantile intervals at a shared
adjustment level gamma, chosen so that the whole ECDF trajectory stays
inside them with probability close to the nominal level.  Gamma can be
calibrated two ways: by simulating trajectories and taking an empirical
quantile of their tightest pointwise tail levels, or by optimizing the
exactly computed interval-crossing probability of the trajectory.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from . import dist
from ._optim import search_gamma
from .transform import EcdfTrajectory, EvaluationGrid, PitValues, default_grid, ecdf_eval

__all__ = [
    "ConfidenceBands",
    "Exceedance",
    "GammaResult",
    "TestReport",
    "bands_from_gamma",
    "coverage_probability",
    "gamma_optimize",
    "gamma_simulate",
    "test_single",
]

DEFAULT_REPLICATES = 10_000


@dataclass(frozen=True)
class GammaResult:
    """Calibrated adjustment level with its exactly attained coverage."""

    gamma: float
    attained_coverage: float
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.attained_coverage <= 1.0:
            raise ValueError("attained coverage must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ConfidenceBands:
    """Lower and upper ECDF envelopes along a grid, as count bounds and
    as fractions of the sample size."""

    grid: EvaluationGrid
    lower_counts: np.ndarray
    upper_counts: np.ndarray
    n: int
    gamma: float
    gamma_info: GammaResult | None = None

    def __post_init__(self):
        lo = np.array(self.lower_counts, dtype=np.int64)
        hi = np.array(self.upper_counts, dtype=np.int64)
        if lo.shape != hi.shape or lo.size != self.grid.size:
            raise ValueError("band bounds must match the grid length")
        if np.any(lo > hi) or lo[0] < 0 or np.any(hi > self.n):
            raise ValueError("band bounds must satisfy 0 <= lower <= upper <= n")
        for arr in (lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "lower_counts", lo)
        object.__setattr__(self, "upper_counts", hi)

    @property
    def lower(self) -> np.ndarray:
        return self.lower_counts / self.n

    @property
    def upper(self) -> np.ndarray:
        return self.upper_counts / self.n


@dataclass(frozen=True)
class Exceedance:
    """One grid point where a trajectory left the band."""

    index: int
    observed: float
    bound: float
    side: str


@dataclass(frozen=True, eq=False)
class TestReport:
    inside: bool
    exceedances: tuple[Exceedance, ...]
    bands: ConfidenceBands
    trajectory: EcdfTrajectory

    def __post_init__(self):
        if self.inside != (len(self.exceedances) == 0):
            raise ValueError("verdict must match the exceedance list")


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return alpha


def _grid_key(grid: EvaluationGrid) -> tuple:
    """Hashable copy of the grid points, used as a cache key."""
    return tuple(float(z) for z in grid.points)


@lru_cache(maxsize=8)
def _cdf_matrix(n: int, pts_key: tuple) -> np.ndarray:
    """Stacked binomial CDF tables, one row per grid point."""
    rows = np.stack([dist.binom_cdf_table(n, z) for z in pts_key])
    rows.setflags(write=False)
    return rows


@lru_cache(maxsize=8)
def _sf_matrix(n: int, pts_key: tuple) -> np.ndarray:
    """Stacked binomial survival tables, one row per grid point."""
    rows = np.stack([dist.binom_sf_table(n, z) for z in pts_key])
    rows.setflags(write=False)
    return rows


def _bounds_from_key(n: int, pts_key: tuple, gamma: float):
    """Vectorized equal-tail count bounds.

    Each CDF row is sorted and ends in exactly 1.0, so counting entries
    strictly below the target level reproduces the scalar quantile rule
    (smallest count whose CDF reaches the level).
    """
    mat = _cdf_matrix(n, pts_key)
    lo = (mat < gamma / 2.0).sum(axis=1).astype(np.int64)
    hi = (mat < 1.0 - gamma / 2.0).sum(axis=1).astype(np.int64)
    return lo, hi


def _interior_bounds(n: int, grid: EvaluationGrid, gamma: float):
    """Equal-tail binomial count bounds [lower, upper] at each grid point."""
    return _bounds_from_key(n, _grid_key(grid), gamma)


def bands_from_gamma(n: int, grid: EvaluationGrid, gamma) -> ConfidenceBands:
    """Equal-tail binomial quantile bands at adjustment level gamma."""
    info = gamma if isinstance(gamma, GammaResult) else None
    g = float(gamma.gamma if info is not None else gamma)
    if not 0.0 < g < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if n < 1:
        raise ValueError("sample size must be positive")
    lo, hi = _interior_bounds(n, grid, g)
    return ConfidenceBands(grid, lo, hi, int(n), g, info)


def coverage_probability(n: int, grid: EvaluationGrid, gamma: float) -> float:
    """Exact probability that a uniform sample's ECDF stays inside the
    gamma-level bands at every grid point.

    Runs a forward pass over the per-point count intervals: conditional
    on the count so far, the increment to the next grid point is
    binomial in the remaining draws with the renormalized step
    probability.  Counts follow the binomial marginals exactly whenever
    each draw satisfies ``Pr(u <= z_i) = z_i``, which holds for
    continuous uniforms at any grid and for discrete uniforms when the
    grid points sit at multiples of the category spacing.
    """
    if n < 1:
        raise ValueError("sample size must be positive")
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0.0:
        return 1.0
    key = _grid_key(grid)
    lo, hi = _bounds_from_key(n, key, gamma)
    out = _interval_mass_fast(n, key, lo, hi)
    if out is None:
        out = _interval_mass(n, grid.points, lo, hi)
    return out


@lru_cache(maxsize=8)
def _step_context(n: int, pts_key: tuple):
    """Gamma-independent pieces of the forward recursion.

    Treats the first grid point as a step from an artificial start at
    z = 0 where the count is 0 with certainty, so every grid point is
    reached by the same conditional-binomial transition.
    """
    z = np.asarray(pts_key, dtype=np.float64)
    # the shared table can be longer than n + 1, so slice before reversing
    lf = dist.log_factorial_table(n)
    lfrev = np.ascontiguousarray(lf[n::-1])  # lfrev[r] = log((n - r)!)
    p = np.empty(z.size)
    p[0] = z[0]
    p[1:] = (z[1:] - z[:-1]) / (1.0 - z[:-1])
    # true step probabilities lie in (0, 1]; clip away last-ulp wobble
    np.clip(p, 0.0, 1.0, out=p)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
        logq = np.log1p(-p)
    for arr in (lfrev, logp, logq):
        arr.setflags(write=False)
    return lf, lfrev, logp, logq


_EXP_GUARD = 600.0


def _interval_mass_fast(n: int, pts_key: tuple, lo: np.ndarray, hi: np.ndarray):
    """Forward recursion written as one convolution per step.

    The transition kernel C(n-r, d) p^d q^(n-r') factors into a part
    that depends on the source count r, a part that depends on the jump
    d, and a part that depends on the destination count r' alone, once
    log (n-r)! is split into an affine fit over the source window plus
    a small residual.  The three parts are precomputed for every step
    in a few whole-array operations, leaving only a short convolution
    loop.  Returns None when the scaled factors would not be safe in
    double precision; the caller then falls back to the direct matrix
    recursion in _interval_mass.
    """
    lf, lfrev, logp, logq = _step_context(n, pts_key)
    lo_ext = np.concatenate(([0], lo))
    hi_ext = np.concatenate(([0], hi))
    if np.any(np.diff(lo_ext) < 0) or np.any(np.diff(hi_ext) < 0):
        return None
    src_lo, dst_lo = lo_ext[:-1], lo_ext[1:]
    src_w = hi_ext[:-1] - src_lo
    dst_w = hi_ext[1:] - dst_lo
    width = int(max(src_w.max(), dst_w.max())) + 1
    d_len = hi_ext[1:] - src_lo + 1
    d_max = int(d_len.max())
    shift = dst_lo - src_lo

    offs = np.arange(width)
    anchor = lfrev[src_lo]
    slope = (anchor - lfrev[hi_ext[:-1]]) / np.maximum(src_w, 1)
    src_r = np.minimum(src_lo[:, None] + offs[None, :], n)
    e1 = lfrev[src_r] - (anchor[:, None] - slope[:, None] * offs[None, :])
    e1 = np.where(offs[None, :] <= src_w[:, None], e1, 0.0)
    if float(np.abs(e1).max()) > _EXP_GUARD:
        return None
    src_scale = np.exp(e1)

    dvals = np.arange(d_max)
    klog = dvals[None, :] * (logp + slope)[:, None] - lf[dvals][None, :]
    klog = np.where(dvals[None, :] < d_len[:, None], klog, -np.inf)
    peak = klog.max(axis=1)
    kernel = np.exp(klog - peak[:, None])

    dst_r = np.minimum(dst_lo[:, None] + offs[None, :], n)
    left = n - dst_r
    with np.errstate(invalid="ignore"):
        tail = np.where(left > 0, left * logq[:, None], 0.0)
    w2 = (
        anchor[:, None]
        - slope[:, None] * (dst_r - src_lo[:, None])
        - lfrev[dst_r]
        + tail
        + peak[:, None]
    )
    w2 = np.where(offs[None, :] <= dst_w[:, None], w2, -np.inf)
    if float(w2.max()) > _EXP_GUARD:
        return None
    dst_scale = np.exp(w2)

    probs = np.zeros(width)
    probs[0] = 1.0
    log_scale = 0.0
    for t in range(len(pts_key)):
        conv = np.convolve(probs * src_scale[t], kernel[t])
        probs = conv[shift[t] : shift[t] + width] * dst_scale[t]
        total = float(probs.sum())
        if total <= 0.0:
            return 0.0
        if total < 1e-250:
            probs = probs / total
            log_scale += math.log(total)
    return float(min(1.0, probs.sum() * math.exp(log_scale)))


def _interval_mass(n: int, pts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Forward recursion over count intervals [lo_i, hi_i] along pts."""
    cur_lo = cur_hi = 0
    probs = np.ones(1)
    z_prev = 0.0
    log_scale = 0.0
    for i in range(pts.size):
        z = float(pts[i])
        step = 1.0 if z_prev >= 1.0 else (z - z_prev) / (1.0 - z_prev)
        new_lo, new_hi = int(lo[i]), int(hi[i])
        probs = _advance(probs, cur_lo, cur_hi, new_lo, new_hi, n, step)
        total = float(probs.sum())
        if total <= 0.0:
            return 0.0
        if total < 1e-250:
            # renormalization guard: keep the mass in a healthy float
            # range and fold the deficit back in at the end
            probs = probs / total
            log_scale += math.log(total)
        cur_lo, cur_hi = new_lo, new_hi
        z_prev = z
    return float(min(1.0, probs.sum() * math.exp(log_scale)))


def _advance(probs, old_lo, old_hi, new_lo, new_hi, n, step):
    if step >= 1.0:
        # final jump to z = 1: every remaining draw arrives at once
        out = np.zeros(new_hi - new_lo + 1)
        if new_lo <= n <= new_hi:
            out[n - new_lo] = probs.sum()
        return out
    r_old = np.arange(old_lo, old_hi + 1)
    r_new = np.arange(new_lo, new_hi + 1)
    growth = r_new[:, None] - r_old[None, :]
    remaining = n - r_old[None, :]
    log_pmf = dist.binom_logpmf(growth, remaining, step)
    return np.exp(log_pmf) @ probs


def _grid_cell_counts(u: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Row-wise counts of values at or below each grid point, (B, K)."""
    k = pts.size
    cells = np.searchsorted(pts, u, side="left")
    rows = u.shape[0]
    flat = cells + (np.arange(rows) * (k + 1))[:, None]
    hist = np.bincount(flat.ravel(), minlength=rows * (k + 1)).reshape(rows, k + 1)
    return np.cumsum(hist, axis=1)[:, :k]


def _tightest_tail_levels(counts: np.ndarray, cdf_rows, sf_rows) -> np.ndarray:
    """Per-trajectory 2 * min over grid points of the smaller tail mass."""
    k = cdf_rows.shape[0]
    idx = np.arange(k)
    tail_lo = cdf_rows[idx, counts]
    tail_hi = sf_rows[idx, counts]
    return 2.0 * np.minimum(tail_lo, tail_hi).min(axis=-1)


def _empirical_lower_quantile(values: np.ndarray, alpha: float) -> float:
    """The ceil(alpha * M)-th smallest value."""
    rank = max(1, math.ceil(alpha * values.size))
    return float(np.partition(values, rank - 1)[rank - 1])


def gamma_simulate(
    n: int,
    grid: EvaluationGrid,
    alpha: float,
    m: int = DEFAULT_REPLICATES,
    seed: int = 0,
    threads: int = 1,
) -> GammaResult:
    """Calibrate gamma by simulation.

    Each replicate draws n uniforms, records the tightest pointwise
    two-sided tail level its trajectory attains anywhere on the grid,
    and gamma is the empirical alpha-quantile of those levels.  Each
    level is strictly positive by construction, which is asserted.
    """
    if n < 1:
        raise ValueError("sample size must be positive")
    alpha = _check_alpha(alpha)
    if m < 100:
        raise ValueError("at least 100 replicates are required")
    pts = grid.points
    key = _grid_key(grid)
    cdf_rows = _cdf_matrix(n, key)
    sf_rows = _sf_matrix(n, key)

    chunk = 512
    starts = list(range(0, m, chunk))

    def run(chunk_index: int) -> np.ndarray:
        size = min(chunk, m - starts[chunk_index])
        rng = np.random.default_rng(np.random.SeedSequence((seed, chunk_index)))
        u = rng.random((size, n))
        counts = _grid_cell_counts(u, pts)
        return _tightest_tail_levels(counts, cdf_rows, sf_rows)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pieces = list(pool.map(run, range(len(starts))))
    else:
        pieces = [run(i) for i in range(len(starts))]
    levels = np.concatenate(pieces)
    assert np.all(levels > 0.0), "tightest tail level must be positive"
    gamma = min(_empirical_lower_quantile(levels, alpha), alpha)
    attained = coverage_probability(n, grid, gamma)
    return GammaResult(gamma, attained, "simulation", {"replicates": m, "alpha": alpha})


def gamma_optimize(
    n: int,
    grid: EvaluationGrid,
    alpha: float,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> GammaResult:
    """Calibrate gamma by minimizing the distance between the exact
    coverage of the bands and the nominal level."""
    if n < 1:
        raise ValueError("sample size must be positive")
    alpha = _check_alpha(alpha)
    gamma, attained, evals = search_gamma(
        lambda g: coverage_probability(n, grid, g), alpha, tol, max_iter
    )
    return GammaResult(gamma, attained, "optimization", {"evaluations": evals, "alpha": alpha})


def _resolve_gamma(
    n: int,
    grid: EvaluationGrid,
    alpha: float,
    method: str,
    m: int,
    seed: int,
    cache,
    threads: int = 1,
) -> GammaResult:
    if method == "auto":
        if cache is not None:
            try:
                return _cache_lookup(cache, n, 1, alpha)
            except (KeyError, ValueError):
                pass
        method = "optimize"
    if method == "optimize":
        return gamma_optimize(n, grid, alpha)
    if method == "simulate":
        return gamma_simulate(n, grid, alpha, m=m, seed=seed, threads=threads)
    if method == "cache":
        if cache is None:
            raise ValueError("method 'cache' requires a gamma grid or its path")
        return _cache_lookup(cache, n, 1, alpha)
    raise ValueError(f"unknown method {method!r}")


def _cache_lookup(cache, n: int, l: int, alpha: float) -> GammaResult:
    from .gamma_cache import GammaGrid, interpolate, load_grid

    grid = cache if isinstance(cache, GammaGrid) else load_grid(cache)
    return interpolate(grid, n, l, alpha)


def test_single(
    u,
    alpha: float = 0.05,
    method: str = "auto",
    grid: EvaluationGrid | None = None,
    *,
    m: int = DEFAULT_REPLICATES,
    seed: int = 0,
    threads: int = 1,
    gamma: GammaResult | float | None = None,
    cache=None,
) -> TestReport:
    """Test one sample of PIT values for uniformity.

    Builds simultaneous bands at the calibrated gamma and reports every
    grid point where the sample's ECDF leaves them.  Band boundaries
    count as inside.
    """
    alpha = _check_alpha(alpha)
    pit = u if isinstance(u, PitValues) else PitValues(np.asarray(u, dtype=np.float64))
    n = pit.size
    if grid is None:
        grid = default_grid(n, pit.resolution)
    if gamma is None:
        gamma = _resolve_gamma(n, grid, alpha, method, m, seed, cache, threads)
    bands = bands_from_gamma(n, grid, gamma)
    trajectory = ecdf_eval(pit, grid)
    exceedances = band_exceedances(bands, trajectory)
    return TestReport(not exceedances, tuple(exceedances), bands, trajectory)


def band_exceedances(bands: ConfidenceBands, trajectory: EcdfTrajectory) -> list[Exceedance]:
    """Grid points where the trajectory leaves the bands; boundaries are
    inside."""
    if trajectory.grid.size != bands.grid.size or not np.array_equal(
        trajectory.grid.points, bands.grid.points
    ):
        raise ValueError("trajectory and bands use different grids")
    if trajectory.n != bands.n:
        raise ValueError("trajectory and bands use different sample sizes")
    out: list[Exceedance] = []
    counts = trajectory.counts
    n = trajectory.n
    for i in range(counts.size):
        c = int(counts[i])
        if c < bands.lower_counts[i]:
            out.append(Exceedance(i, c / n, float(bands.lower_counts[i] / bands.n), "lower"))
        elif c > bands.upper_counts[i]:
            out.append(Exceedance(i, c / n, float(bands.upper_counts[i] / bands.n), "upper"))
    return out
