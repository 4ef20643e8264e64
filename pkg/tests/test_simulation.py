from __future__ import annotations

import math

import numpy as np
import pytest

from groupdraw.constraints import assignment_valid, pair_support
from groupdraw.exactprob import (
    EXAMPLE1_SCENARIO,
    matchup_matrix,
    uniform_distribution,
    validity_probability,
)
from groupdraw.metrics import mean_abs_bias
from groupdraw.model import ConstraintScenario, DrawInstance, GroupAssignment, Team, scenario_from_index
from groupdraw.samplers import HostPolicy, InfeasibleScenario, mask_from_flags
from groupdraw.simulation import simulate_skip, simulate_unconstrained, simulate_until_accepted


def small_instance():
    confeds = [["A", "B", "C", "A"], ["B", "A", "C", "B"], ["A", "C", "B", "C"]]
    teams = [Team.single(f"{p}{g}", p + 1, c) for p, row in enumerate(confeds) for g, c in enumerate(row)]
    return DrawInstance(tuple(teams), 4, 3, name="small")


def test_unconstrained_deterministic(wc2018):
    a = simulate_unconstrained(wc2018, 20_000, seed=5, block_size=4096)
    b = simulate_unconstrained(wc2018, 20_000, seed=5, block_size=4096)
    c = simulate_unconstrained(wc2018, 20_000, seed=6, block_size=4096)
    assert (a.pair_counts == b.pair_counts).all() and (a.pattern_draws == b.pattern_draws).all()
    assert not (a.pattern_draws == c.pattern_draws).all()


def test_unconstrained_worker_independent(wc2022):
    a = simulate_unconstrained(wc2022, 12_000, seed=3, block_size=4096, workers=1)
    b = simulate_unconstrained(wc2022, 12_000, seed=3, block_size=4096, workers=2)
    assert (a.pair_counts == b.pair_counts).all()
    assert (a.psi_sum == b.psi_sum).all()


def test_skip_deterministic_and_worker_independent(wc2018):
    s = scenario_from_index(31)
    a = simulate_skip(wc2018, s, 3000, seed=2, block_size=1024)
    b = simulate_skip(wc2018, s, 3000, seed=2, block_size=1024, workers=2)
    assert (a.accumulator.pair_counts == b.accumulator.pair_counts).all()
    assert a.skips == b.skips and a.accumulator.psi_sum == b.accumulator.psi_sum


def test_accepted_counts_match_masks(wc2018):
    res = simulate_unconstrained(wc2018, 50_000, seed=1)
    assert res.draws == 50_000
    for k in range(32):
        mask_total = sum(int(res.pattern_draws[p]) for p in range(32) if mask_from_flags(p) >> k & 1)
        assert res.accepted(k) == mask_total == res.for_scenario(k).draw_count


def test_acceptance_converges_to_exact(wc2022):
    res = simulate_unconstrained(wc2022, 200_000, seed=4)
    for k in (1, 3, 16, 24, 31):
        p = float(validity_probability(wc2022, scenario_from_index(k)))
        sigma = math.sqrt(p * (1 - p) / res.draws)
        assert abs(res.validity(k) - p) < 3 * sigma, k


def test_rejection_respects_support(wc2018):
    res = simulate_unconstrained(wc2018, 300_000, seed=8)
    acc = res.for_scenario(31)
    assert acc.draw_count > 1000
    sup = pair_support(wc2018, scenario_from_index(31))
    i, j = np.nonzero(np.triu(acc.pair_counts))
    assert set(zip(i.tolist(), j.tolist())) <= sup
    assert acc.psi_min == acc.psi_max == 6.0


def test_row_sums(wc2022):
    acc = simulate_skip(wc2022, scenario_from_index(27), 2000, seed=1).accumulator
    p = acc.matchup_matrix()
    assert np.abs(p.sum(axis=1) - 3).max() < 1e-9


def test_kept_draws_are_valid(wc2022):
    s = scenario_from_index(31)
    res = simulate_skip(wc2022, s, 500, seed=3, keep=500, policy=HostPolicy.PRE_ASSIGN)
    assert res.groups.shape == (500, 8, 4)
    for g in res.groups:
        a = GroupAssignment(tuple(tuple(int(t) for t in row) for row in g), wc2022.group_labels)
        assert assignment_valid(a, s, wc2022)
        assert a.groups[0][0] == wc2022.host


def test_no_skips_without_constraints(wc2018):
    assert simulate_skip(wc2018, scenario_from_index(0), 2000, seed=0).skips == 0


def test_skip_self_consistency(wc2018):
    # Two independent Skip streams agree up to Monte Carlo noise.
    s = scenario_from_index(31)
    a = simulate_skip(wc2018, s, 20_000, seed=1).accumulator.matchup_matrix()
    b = simulate_skip(wc2018, s, 20_000, seed=2).accumulator.matchup_matrix()
    sup = pair_support(wc2018, s)
    # Mean of |difference of two binomial estimates| is about sqrt(4p(1-p)/(pi n)).
    noise = 100 * np.mean([math.sqrt(4 * a[i, j] * (1 - a[i, j]) / (math.pi * 20_000)) for i, j in sup])
    assert mean_abs_bias(a, b, sup) < noise + 4 * noise / math.sqrt(len(sup))


def test_example1_skip_sampling(example1):
    acc = simulate_skip(example1, EXAMPLE1_SCENARIO, 100_000, seed=9).accumulator
    p = acc.matchup_matrix()
    assert abs(p[example1.index("1"), example1.index("4")] - 0.5) < 3 * math.sqrt(0.25 / 1e5)


@pytest.mark.parametrize("code", ["A", "B", "C"])
def test_single_max_one_constraint_is_uniform(code):
    inst = small_instance()
    s = ConstraintScenario({code: (0, 1)})
    exact = matchup_matrix(inst, uniform_distribution(inst, s))
    n = 60_000
    p = simulate_skip(inst, s, n, seed=3).accumulator.matchup_matrix()
    for i in range(inst.team_count):
        for j in range(i + 1, inst.team_count):
            q = float(exact[i][j])
            sigma = math.sqrt(q * (1 - q) / n)
            assert abs(p[i, j] - q) <= 4 * sigma + 1e-12, (i, j)


def test_infeasible_skip(example1):
    with pytest.raises(InfeasibleScenario):
        simulate_skip(example1, ConstraintScenario({"X": (2, 3)}), 10)


def test_until_accepted(wc2018):
    res = simulate_until_accepted(wc2018, 500, [31], seed=1, block_size=1 << 14)
    assert res.accepted(31) >= 500
    again = simulate_until_accepted(wc2018, 500, [31], seed=1, block_size=1 << 14, workers=2)
    assert again.draws == res.draws
    with pytest.raises(RuntimeError):
        simulate_until_accepted(wc2018, 10**6, [31], seed=1, block_size=1 << 12, max_draws=1 << 13)
