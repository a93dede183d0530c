"""Multi-chain rank bands.

Under the null every assignment of pooled ranks to chains is equally
likely, so exact coverage has a combinatorial oracle: enumerate all
interleavings and count the ones whose per-chain trajectories stay
inside the shared bounds.  Both the two-chain and the three-chain
recursions are checked against that enumeration.
"""

import itertools

import numpy as np
import pytest

from ecdf_bands.bands_multi import (
    MultiBands,
    MultiTestReport,
    _band_bounds,
    _pooled_counts,
    _rank_cell_counts,
    bands_from_gamma_multi,
    coverage_probability_multi,
    gamma_optimize_multi,
    gamma_simulate_multi,
)
from ecdf_bands.bands_multi import test_multi as run_multi_test
from ecdf_bands.bands_single import GammaResult
from ecdf_bands.transform import ChainSet, EvaluationGrid, default_grid


def enumerate_interleaving_coverage(n: int, l: int, grid: EvaluationGrid, gamma: float) -> float:
    """Coverage by enumerating every split of the pooled ranks."""
    s = _pooled_counts(grid, n, l)
    lo, hi = _band_bounds(n, l, s, gamma)
    pool = list(range(1, l * n + 1))
    inside = total = 0

    def splits(remaining, chains_left):
        if chains_left == 1:
            yield (tuple(remaining),)
            return
        for picked in itertools.combinations(remaining, n):
            rest = [r for r in remaining if r not in picked]
            for tail in splits(rest, chains_left - 1):
                yield (picked,) + tail

    for assignment in splits(pool, l):
        total += 1
        ok = True
        for chain in assignment:
            arr = np.array(chain)
            counts = (arr[:, None] <= s[None, :]).sum(axis=0)
            if np.any(counts < lo) or np.any(counts > hi):
                ok = False
                break
        if ok:
            inside += 1
    return inside / total


def test_two_chain_coverage_matches_enumeration():
    grid = EvaluationGrid([0.25, 0.5, 0.75])
    for gamma in (0.01, 0.05, 0.2, 0.6):
        want = enumerate_interleaving_coverage(4, 2, grid, gamma)
        got = coverage_probability_multi(4, 2, grid, gamma)
        assert got == pytest.approx(want, abs=1e-13), gamma


def test_two_chain_coverage_with_endpoint_grid():
    grid = EvaluationGrid([0.25, 0.5, 0.75, 1.0])
    for gamma in (0.05, 0.3):
        want = enumerate_interleaving_coverage(4, 2, grid, gamma)
        got = coverage_probability_multi(4, 2, grid, gamma)
        assert got == pytest.approx(want, abs=1e-13), gamma


def test_three_chain_coverage_matches_enumeration():
    grid = EvaluationGrid([1 / 3, 2 / 3, 1.0])
    for gamma in (0.05, 0.3, 0.8):
        want = enumerate_interleaving_coverage(3, 3, grid, gamma)
        got = coverage_probability_multi(3, 3, grid, gamma)
        assert got == pytest.approx(want, abs=1e-13), gamma


def test_three_chain_coverage_off_lattice_grid():
    grid = EvaluationGrid([0.28, 0.77])
    for gamma in (0.1, 0.5):
        want = enumerate_interleaving_coverage(3, 3, grid, gamma)
        got = coverage_probability_multi(3, 3, grid, gamma)
        assert got == pytest.approx(want, abs=1e-13), gamma


def test_pooled_counts_guard_against_ulp_undershoot():
    # 0.3 * 1000 lands one ulp under 300 in floating point
    grid = EvaluationGrid([0.3, 1.0])
    s = _pooled_counts(grid, 100, 10)
    np.testing.assert_array_equal(s, [300, 1000])
    s2 = _pooled_counts(EvaluationGrid([1 / 3, 2 / 3, 1.0]), 3, 3)
    np.testing.assert_array_equal(s2, [3, 6, 9])


def test_band_bounds_are_hypergeometric_quantiles():
    from ecdf_bands import dist

    n, l, gamma = 12, 3, 0.08
    s = np.array([5, 14, 30])
    lo, hi = _band_bounds(n, l, s, gamma)
    for i, si in enumerate(s):
        assert lo[i] == dist.hyper_quantile(gamma / 2.0, n, (l - 1) * n, int(si))
        assert hi[i] == dist.hyper_quantile(1.0 - gamma / 2.0, n, (l - 1) * n, int(si))


def test_coverage_multi_monotone_in_gamma_and_edges():
    grid = default_grid(30, 60)
    values = [coverage_probability_multi(30, 2, grid, g) for g in (0.005, 0.05, 0.3)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert coverage_probability_multi(30, 2, grid, 0.0) == 1.0
    with pytest.raises(ValueError):
        coverage_probability_multi(30, 4, grid, 0.05)
    with pytest.raises(ValueError):
        coverage_probability_multi(30, 1, grid, 0.05)


def test_gamma_optimize_multi_two_chains_hits_target():
    grid = default_grid(50, 100)
    res = gamma_optimize_multi(50, 2, grid, 0.05)
    assert res.method == "optimization"
    assert 0.0 < res.gamma <= 0.05
    assert res.attained_coverage == pytest.approx(0.95, abs=0.01)
    assert res.attained_coverage == pytest.approx(
        coverage_probability_multi(50, 2, grid, res.gamma), abs=1e-12
    )


def test_gamma_optimize_multi_three_chains_small_sample():
    grid = default_grid(20, 60)
    res = gamma_optimize_multi(20, 3, grid, 0.1)
    assert 0.0 < res.gamma <= 0.1
    assert res.attained_coverage == pytest.approx(0.9, abs=0.03)
    with pytest.raises(ValueError):
        gamma_optimize_multi(20, 4, grid, 0.1)


def test_gamma_simulate_multi_determinism_and_exact_attained():
    grid = default_grid(40, 80)
    a = gamma_simulate_multi(40, 2, grid, 0.05, m=1500, seed=4)
    b = gamma_simulate_multi(40, 2, grid, 0.05, m=1500, seed=4)
    c = gamma_simulate_multi(40, 2, grid, 0.05, m=1500, seed=4, threads=2)
    assert a.gamma == b.gamma == c.gamma
    assert a.method == "simulation"
    assert 0.0 < a.gamma <= 0.05
    # for two chains the attained coverage is recomputed exactly
    assert a.attained_coverage == pytest.approx(
        coverage_probability_multi(40, 2, grid, a.gamma), abs=1e-12
    )
    assert "attained_estimate" not in a.meta


def test_gamma_simulate_multi_many_chains_reports_in_sample_estimate():
    grid = default_grid(25, 125)
    res = gamma_simulate_multi(25, 5, grid, 0.05, m=1200, seed=9)
    assert res.meta["attained_estimate"] == "in_sample"
    assert 0.8 <= res.attained_coverage <= 1.0


def test_rank_cell_counts_matches_brute_force():
    rng = np.random.default_rng(13)
    l, n = 3, 8
    b = 5
    ranks = np.empty((b, l * n), dtype=np.int64)
    for i in range(b):
        ranks[i] = rng.permutation(l * n) + 1
    s = np.array([4, 12, 20])
    got = _rank_cell_counts(ranks, s, n, l)
    want = np.empty((b, l, s.size), dtype=np.int64)
    for i in range(b):
        for c in range(l):
            chain = ranks[i, c * n : (c + 1) * n]
            for j, sj in enumerate(s):
                want[i, c, j] = int((chain <= sj).sum())
    np.testing.assert_array_equal(got, want)


def test_multibands_structure_and_validation():
    grid = EvaluationGrid([0.5, 1.0])
    mb = MultiBands(grid, np.array([1, 4]), np.array([3, 4]), 4, 2, 0.05)
    np.testing.assert_allclose(mb.lower, [0.25, 1.0])
    np.testing.assert_allclose(mb.upper, [0.75, 1.0])
    with pytest.raises(ValueError):
        MultiBands(grid, np.array([3, 4]), np.array([1, 4]), 4, 2, 0.05)
    with pytest.raises(ValueError):
        MultiBands(grid, np.array([1]), np.array([3]), 4, 2, 0.05)


def test_bands_from_gamma_multi_passthrough_and_errors():
    grid = default_grid(10, 20)
    res = GammaResult(0.02, 0.95, "optimization")
    mb = bands_from_gamma_multi(10, 2, grid, res)
    assert mb.gamma == 0.02
    assert mb.gamma_info is res
    assert mb.n_chains == 2
    with pytest.raises(ValueError):
        bands_from_gamma_multi(10, 1, grid, 0.02)
    with pytest.raises(ValueError):
        bands_from_gamma_multi(10, 2, grid, 0.0)


def test_multi_test_accepts_same_distribution_chains():
    rng = np.random.default_rng(21)
    cs = ChainSet(rng.standard_normal((4, 80)))
    rep = run_multi_test(cs, alpha=0.05, method="simulate", m=2000, seed=2)
    assert rep.inside
    assert len(rep.chains) == 4
    assert all(r.inside for r in rep.chains)
    assert rep.bands.n == 80
    # default grid uses the pooled resolution l * n
    assert rep.bands.grid.size == 80


def test_multi_test_flags_a_shifted_chain():
    rng = np.random.default_rng(22)
    draws = rng.standard_normal((3, 60))
    draws[0] += 2.5
    rep = run_multi_test(ChainSet(draws), alpha=0.05)
    assert not rep.inside
    shifted_report = rep.chains[0]
    assert not shifted_report.inside
    sides = {e.side for e in shifted_report.exceedances}
    # the shifted chain owns the top ranks, so its ECDF runs low
    assert sides == {"lower"}


def test_multi_test_gamma_passthrough_and_grid_choice():
    rng = np.random.default_rng(23)
    cs = ChainSet(rng.standard_normal((2, 30)))
    grid = default_grid(30, 60, k_max=10)
    rep = run_multi_test(cs, grid=grid, gamma=0.03)
    assert rep.bands.gamma == 0.03
    assert rep.bands.grid is grid
    counts_sum = sum(int(r.trajectory.counts[-1]) for r in rep.chains)
    assert counts_sum == 60 or grid.points[-1] < 1.0


def test_multi_report_requires_consistent_verdict():
    rng = np.random.default_rng(24)
    cs = ChainSet(rng.standard_normal((2, 25)))
    rep = run_multi_test(cs, gamma=0.05)
    with pytest.raises(ValueError):
        MultiTestReport(not rep.inside, rep.chains, rep.bands)


def test_multi_test_rejects_single_chain():
    with pytest.raises(ValueError):
        run_multi_test(ChainSet(np.arange(10.0)))
