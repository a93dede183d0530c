"""PIT values, fractional ranks, pooled cross-chain ranks, and ECDF
evaluation on a fixed grid of quantiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChainSet",
    "EcdfTrajectory",
    "EvaluationGrid",
    "PitValues",
    "default_grid",
    "ecdf_eval",
    "empirical_pit",
    "fractional_ranks",
    "grid_from_ranks",
    "joint_fractional_ranks",
]


@dataclass(frozen=True, eq=False)
class EvaluationGrid:
    """Strictly increasing evaluation quantiles ``z_1 < ... < z_K`` in (0, 1].

    ``z_0 = 0`` is an implicit anchor: every trajectory starts there with
    zero mass, so it never needs to be stored.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid needs at least one point")
        if not (pts[0] > 0.0 and pts[-1] <= 1.0):
            raise ValueError("grid points must lie in (0, 1]")
        if not np.all(np.diff(pts) > 0.0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return int(self.points.size)


@dataclass(frozen=True, eq=False)
class ChainSet:
    """Equal-length chains of finite real draws, stored as an (L, N) array."""

    chains: np.ndarray

    def __post_init__(self):
        try:
            arr = np.array(self.chains, dtype=np.float64)
        except (ValueError, TypeError) as exc:
            raise ValueError("chains must be numeric and of equal length") from exc
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] == 0:
            raise ValueError("chains must form a nonempty (L, N) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("chain draws must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "chains", arr)

    @property
    def n_chains(self) -> int:
        return int(self.chains.shape[0])

    @property
    def n_draws(self) -> int:
        return int(self.chains.shape[1])


@dataclass(frozen=True, eq=False)
class PitValues:
    """PIT values in [0, 1] with the resolution of the comparison sample.

    ``resolution = S`` means each value is a multiple of ``1/S``;
    ``resolution = None`` marks continuous (infinite-resolution) values.
    """

    values: np.ndarray
    resolution: int | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("PIT values must form a nonempty 1-D sequence")
        if not np.all((vals >= 0.0) & (vals <= 1.0)):
            raise ValueError("PIT values must lie in [0, 1]")
        res = self.resolution
        if res is not None:
            if isinstance(res, float) and math.isinf(res):
                res = None
            else:
                res = int(res)
                if res < 1:
                    raise ValueError("resolution must be a positive integer")
                scaled = vals * res
                if not np.allclose(scaled, np.round(scaled), atol=1e-9):
                    raise ValueError(
                        "values are not multiples of 1/resolution"
                    )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "resolution", res)

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class EcdfTrajectory:
    """Scaled ECDF counts ``r_i = N * F(z_i)`` along an evaluation grid."""

    grid: EvaluationGrid
    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        n = int(self.n)
        if counts.ndim != 1 or counts.size != self.grid.size:
            raise ValueError("counts must match the grid length")
        if n < 1:
            raise ValueError("sample size must be positive")
        if counts[0] < 0 or counts[-1] > n or np.any(np.diff(counts) < 0):
            raise ValueError("counts must be nondecreasing within [0, n]")
        if self.grid.points[-1] == 1.0 and counts[-1] != n:
            raise ValueError("count at z = 1 must equal the sample size")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n", n)

    def fractions(self) -> np.ndarray:
        """ECDF values ``F(z_i)`` as floats."""
        return self.counts / self.n


def empirical_pit(y, comparison) -> PitValues:
    """Empirical PIT of each ``y_i`` against its comparison sample.

    ``u_i`` is the fraction of the i-th comparison sample at or below
    ``y_i``.  All comparison samples must share one length S >= 1, which
    becomes the resolution of the result.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a nonempty 1-D sequence")
    try:
        comp = np.asarray(comparison, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise ValueError("comparison samples must share one length") from exc
    if comp.ndim != 2 or comp.shape[0] != y.size:
        raise ValueError("comparison must be an (N, S) array matching y")
    if comp.shape[1] == 0:
        raise ValueError("comparison samples must be nonempty")
    u = (comp <= y[:, None]).mean(axis=1)
    return PitValues(u, resolution=comp.shape[1])


def fractional_ranks(y) -> np.ndarray:
    """Fraction of the sample at or below each value; ties share the
    maximal count."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a nonempty 1-D sequence")
    order = np.sort(y)
    return np.searchsorted(order, y, side="right") / y.size


def joint_fractional_ranks(
    chains, tie_policy: str = "deterministic", seed: int = 0
) -> np.ndarray:
    """Pooled fractional ranks of every draw across chains, shape (L, N).

    Ranks are assigned over the pooled L*N draws, so the flattened result
    is exactly the multiset {1/(LN), ..., 1}.  Ties are broken either
    deterministically, by (value, chain index, draw index), or uniformly
    at random under ``tie_policy="random"`` with the given seed.
    """
    cs = chains if isinstance(chains, ChainSet) else ChainSet(chains)
    if cs.n_chains < 2:
        raise ValueError("joint ranking requires at least two chains")
    flat = cs.chains.ravel()
    if tie_policy == "deterministic":
        # stable sort on the flattened row-major layout is exactly the
        # (value, chain index, draw index) ordering
        order = np.argsort(flat, kind="stable")
    elif tie_policy == "random":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        order = np.lexsort((rng.permutation(flat.size), flat))
    else:
        raise ValueError(f"unknown tie policy {tie_policy!r}")
    ranks = np.empty(flat.size, dtype=np.int64)
    ranks[order] = np.arange(1, flat.size + 1)
    return (ranks / flat.size).reshape(cs.chains.shape)


def ecdf_eval(u, grid: EvaluationGrid) -> EcdfTrajectory:
    """Count values at or below each grid point."""
    vals = u.values if isinstance(u, PitValues) else np.asarray(u, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("values must form a nonempty 1-D sequence")
    if not np.all((vals >= 0.0) & (vals <= 1.0)):
        raise ValueError("values must lie in [0, 1]")
    counts = np.searchsorted(np.sort(vals), grid.points, side="right")
    return EcdfTrajectory(grid, counts.astype(np.int64), vals.size)


def default_grid(n: int, resolution: int | None = None, k_max: int = 100) -> EvaluationGrid:
    """Uniform evaluation grid ``i/K`` with ``K = min(n, resolution, k_max)``.

    With a finite resolution S, K is lowered to the largest value that
    divides S so every grid point is a multiple of 1/S.
    """
    if n < 1 or k_max < 1:
        raise ValueError("sample size and k_max must be positive")
    k = min(int(n), int(k_max))
    if resolution is not None and not (
        isinstance(resolution, float) and math.isinf(resolution)
    ):
        res = int(resolution)
        if res < 1:
            raise ValueError("resolution must be a positive integer")
        k = min(k, res)
        while res % k:
            k -= 1
    return EvaluationGrid(np.arange(1, k + 1) / k)


def grid_from_ranks(values) -> EvaluationGrid:
    """Grid at the distinct fractional-rank positions of a sample.

    An alternative to the uniform partition: evaluation points sit
    exactly where the sample's own ECDF steps.
    """
    return EvaluationGrid(np.unique(fractional_ranks(values)))
