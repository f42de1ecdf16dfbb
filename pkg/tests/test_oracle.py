from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import metrics_oracle
from parkedrsu.experiments import compare_greedy_vs_optimal, random_instance
from parkedrsu.grid import CoverageMap
from parkedrsu.oracle import (
    NetworkMetrics,
    Objective,
    TooManyCandidates,
    brute_force_optimal,
    candidate_matrix,
    evaluate_subset,
    objective_value,
)
from strategies import random_map


def _cands(seed, n, span=250.0):
    rng = np.random.default_rng(seed)
    return [random_map(rng, span=span, density=rng.uniform(0.2, 0.8)) for _ in range(n)]


def _lexi_reference(cands, eps=0.01):
    n = len(cands)
    rows = [(mask, evaluate_subset(cands, mask)) for mask in range(1 << n)]
    n_cells = candidate_matrix(cands).levels.shape[1]
    best_sig = max(m.mean_signal for _, m in rows)
    ok = [(m.rsu_count, round(m.mean_saturation * n_cells), mask) for mask, m in rows
          if m.mean_signal >= best_sig - eps - 1e-12]
    return min(ok)[2]


def test_all_inactive_and_single():
    cands = _cands(0, 3)
    assert evaluate_subset(cands, 0) == NetworkMetrics(0.0, 0.0, 0)
    solo = evaluate_subset([cands[0]], [True])
    nz = cands[0].cells[cands[0].cells > 0]
    assert solo.mean_signal == pytest.approx(nz.mean())
    assert solo.mean_saturation == 1.0 and solo.rsu_count == 1
    assert evaluate_subset([], []) == NetworkMetrics(0.0, 0.0, 0)


def test_all_256_masks_match_per_cell_oracle():
    cands = _cands(1, 8)
    for mask in range(256):
        active = [(mask >> k) & 1 == 1 for k in range(8)]
        got = evaluate_subset(cands, mask)
        exp = metrics_oracle(cands, active)
        assert got.mean_signal == pytest.approx(exp[0], abs=1e-12)
        assert got.mean_saturation == pytest.approx(exp[1], abs=1e-12)
        assert got.rsu_count == exp[2]
        assert evaluate_subset(cands, active) == got


def test_bitmask_length_checked():
    cands = _cands(2, 3)
    with pytest.raises(ValueError):
        evaluate_subset(cands, [True, False])
    with pytest.raises(ValueError):
        evaluate_subset(cands, 8)


@given(st.integers(0, 10_000), st.permutations(range(6)))
def test_permutation_invariance(seed, perm):
    cands = _cands(seed, 6)
    mask = [bool((seed >> k) & 1) for k in range(6)]
    a = evaluate_subset(cands, mask)
    b = evaluate_subset([cands[p] for p in perm], [mask[p] for p in perm])
    assert a.rsu_count == b.rsu_count
    assert a.mean_signal == pytest.approx(b.mean_signal)
    assert a.mean_saturation == pytest.approx(b.mean_saturation)


@given(st.integers(0, 10_000), st.integers(0, 63), st.integers(0, 5))
def test_activating_nonempty_car_never_lowers_signal(seed, mask, k):
    cands = _cands(seed, 6)
    if (mask >> k) & 1 or cands[k].coverage_count() == 0:
        return
    before = evaluate_subset(cands, mask)
    after = evaluate_subset(cands, mask | (1 << k))
    assert after.mean_signal >= before.mean_signal


def test_disjoint_maps_all_active():
    cells = np.zeros((3, 3), dtype=np.uint8)
    cells[1, 1] = 4
    cands = [CoverageMap(cells, (100.0 * k, 0.0)) for k in range(5)]
    best = brute_force_optimal(cands)
    assert best.active == (True,) * 5
    assert best.metrics.mean_saturation == 1.0


def test_duplicates_collapse_to_one_each():
    a, b = _cands(3, 2, span=1.0)  # overlapping windows
    cands = [a, a, a, b, b, b]
    best = brute_force_optimal(cands)
    assert sum(best.active[:3]) == 1
    assert sum(best.active[3:]) <= 1
    # the lowest index of each duplicate set wins the tie
    if sum(best.active[3:]) == 1:
        assert best.active[3]
    assert best.active[0]


@pytest.mark.parametrize("n", [3, 6, 8])
def test_lexicographic_matches_full_recomputation(n):
    for seed in range(4):
        cands = _cands(seed * 10 + n, n)
        assert brute_force_optimal(cands).mask == _lexi_reference(cands)


def test_scalarized_matches_full_recomputation():
    cands = _cands(5, 7)
    obj = Objective("scalarized", alpha=0.1)
    best = brute_force_optimal(cands, obj)
    vals = [objective_value(evaluate_subset(cands, m), obj) for m in range(1 << 7)]
    assert objective_value(best.metrics, obj) == pytest.approx(max(vals))


def test_cap_refusal():
    cands = _cands(6, 5)
    with pytest.raises(TooManyCandidates, match="cap"):
        brute_force_optimal(cands, cap=4)
    with pytest.raises(ValueError):
        Objective("nope")


@pytest.mark.parametrize("seed", range(5))
def test_optimum_dominates_greedy(seed):
    c = compare_greedy_vs_optimal(random_instance(seed, 10))
    obj = Objective()
    assert objective_value(c.optimal, obj) >= objective_value(c.greedy, obj) - obj.eps
    assert c.optimal.mean_signal >= c.greedy.mean_signal - obj.eps


def test_single_candidate_ratios_are_one():
    c = compare_greedy_vs_optimal(random_instance(0, 1))
    assert c.coverage_ratio == 1.0
    assert c.count_ratio == 1.0
