from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groupdraw import _kernels
from groupdraw.constraints import assignment_valid
from groupdraw.exactprob import EXAMPLE1_SCENARIO
from groupdraw.model import ConstraintScenario, GroupAssignment, scenario_from_index
from groupdraw.samplers import (
    HostPolicy,
    InfeasibleScenario,
    RandomStream,
    constraint_flags,
    default_pot_order,
    random_draw_order,
    relabel_host_to_first,
    scenario_satisfaction_mask,
    skip_draw,
    skip_place,
    unconstrained_draw,
)
from groupdraw.simulation import _Memo, skip_tables


def test_host_policy_parse():
    assert HostPolicy.parse("pre-assign") is HostPolicy.PRE_ASSIGN
    assert HostPolicy.parse("relabel") is HostPolicy.DRAW_AND_RELABEL
    with pytest.raises(ValueError):
        HostPolicy.parse("nope")


def test_stream_determinism():
    a = RandomStream(7, 3).generator().integers(0, 1 << 30, 5)
    b = RandomStream(7, 3).generator().integers(0, 1 << 30, 5)
    c = RandomStream(7, 4).generator().integers(0, 1 << 30, 5)
    assert (a == b).all() and not (a == c).all()


def test_unconstrained_draw_deterministic(wc2018):
    a = unconstrained_draw(wc2018, rng=RandomStream(1, 0).generator())
    b = unconstrained_draw(wc2018, rng=RandomStream(1, 0).generator())
    assert a == b and a.complete


def test_unconstrained_pre_assign_fixes_host(wc2018):
    for seed in range(20):
        a = unconstrained_draw(wc2018, HostPolicy.PRE_ASSIGN, rng=seed)
        assert a.groups[0][0] == wc2018.host


def test_example1_forced_branch(example1):
    # Pots 1-2 give A={1,3}, B={2,4}; both pot-3 orders end in {1,3,6}/{2,4,5}.
    i = example1.index
    for third in ([i("5"), i("6")], [i("6"), i("5")]):
        a, _ = skip_place(example1, EXAMPLE1_SCENARIO, [[i("1"), i("2")], [i("3"), i("4")], third])
        assert a.named(example1) == {"A": ["1", "3", "6"], "B": ["2", "4", "5"]}


def test_skip_counts_skipped_placements(example1):
    i = example1.index
    _, skips = skip_place(example1, EXAMPLE1_SCENARIO, [[i("1"), i("2")], [i("3"), i("4")], [i("5"), i("6")]])
    assert skips == 1


def test_infeasible_scenario(example1):
    with pytest.raises(InfeasibleScenario):
        skip_draw(example1, ConstraintScenario({"X": (2, 3)}), rng=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 31), st.integers(0, 2**32 - 1))
def test_skip_draw_always_valid(wc2018, k, seed):
    s = scenario_from_index(k)
    a = skip_draw(wc2018, s, rng=seed)
    assert a.complete and assignment_valid(a, s, wc2018)
    assert a.groups[0][0] == wc2018.host


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([1, 5, 17, 27, 31]), st.integers(0, 2**32 - 1))
def test_skip_draw_valid_2022_pre_assign(wc2022, k, seed):
    s = scenario_from_index(k)
    a = skip_draw(wc2022, s, HostPolicy.PRE_ASSIGN, rng=seed)
    assert assignment_valid(a, s, wc2022)
    assert a.groups[0][0] == wc2022.host


def test_no_skips_without_constraints(wc2018):
    rng = np.random.default_rng(3)
    order = default_pot_order(wc2018)
    for _ in range(50):
        _, skips = skip_place(wc2018, ConstraintScenario(), random_draw_order(wc2018, rng, order))
        assert skips == 0


def test_mask_only_e_violated(wc2018):
    rng = np.random.default_rng(0)
    e_bit = 1
    for _ in range(2000):
        a = unconstrained_draw(wc2018, rng=rng)
        if constraint_flags(a, wc2018) == 31 - e_bit:
            mask = scenario_satisfaction_mask(a, wc2018)
            assert [k for k in range(32) if mask >> k & 1] == list(range(0, 32, 2))
            return
    pytest.fail("no draw violating only E found")


def test_mask_matches_assignment_valid(wc2022):
    from groupdraw.constraints import assignment_valid as valid

    rng = np.random.default_rng(5)
    for _ in range(30):
        a = unconstrained_draw(wc2022, rng=rng)
        mask = scenario_satisfaction_mask(a, wc2022)
        for k in range(32):
            assert bool(mask >> k & 1) == valid(a, scenario_from_index(k), wc2022)


def test_relabel(wc2018):
    a = unconstrained_draw(wc2018, HostPolicy.PRE_ASSIGN, rng=1)
    assert relabel_host_to_first(a, wc2018.host) == a
    rows = list(a.groups)
    rows[0], rows[2] = rows[2], rows[0]
    moved = GroupAssignment(tuple(rows), a.labels)
    back = relabel_host_to_first(moved, wc2018.host)
    assert back == a
    assert sorted(back.pairs()) == sorted(moved.pairs())
    with pytest.raises(ValueError):
        relabel_host_to_first(GroupAssignment.empty(wc2018), wc2018.host)


def _kernel_place(inst, s, policy, draw_order):
    pot_order = default_pot_order(inst)
    t = skip_tables(inst, s, policy, pot_order)
    memo = _Memo.empty(1 << 16)
    order = np.full_like(t.urns, -1)
    for q, teams in enumerate(draw_order):
        order[q, : len(teams)] = teams
    groups = np.empty((inst.group_count, inst.pot_count), dtype=np.int64)
    while True:
        n = _kernels.place_order(order, *t.args()[1:], memo.keys, memo.vals, memo.fill, groups)
        if n != -2:
            return n, groups
        memo.grow()


@pytest.mark.parametrize("name", ["wc2018", "wc2022"])
@pytest.mark.parametrize("k", [1, 5, 14, 17, 27, 30, 31])
@pytest.mark.parametrize("policy", list(HostPolicy))
def test_kernel_matches_reference(request, name, k, policy):
    inst = request.getfixturevalue(name)
    s = scenario_from_index(k)
    rng = np.random.default_rng(k)
    exclude = inst.host if policy is HostPolicy.PRE_ASSIGN else None
    for _ in range(10):
        order = random_draw_order(inst, rng, default_pot_order(inst), exclude)
        a, skips = skip_place(inst, s, order, policy)
        n, groups = _kernel_place(inst, s, policy, order)
        assert n == skips
        assert groups.tolist() == [list(r) for r in a.groups]
