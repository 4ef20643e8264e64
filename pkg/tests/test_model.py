from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from groupdraw.model import (
    ConstraintScenario,
    DrawInstance,
    GroupAssignment,
    Team,
    index_of_scenario,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    scenario_from_index,
    scenario_letters,
    validate_instance,
)

FULL = {"AFC": (0, 1), "CAF": (0, 1), "CONCACAF": (0, 1), "CONMEBOL": (0, 1), "UEFA": (1, 2)}


def test_scenario_zero_and_full():
    assert dict(scenario_from_index(0).bounds) == {}
    assert dict(scenario_from_index(31).bounds) == FULL


def test_scenario_25_is_abe():
    assert dict(scenario_from_index(25).bounds) == {"AFC": (0, 1), "CAF": (0, 1), "UEFA": (1, 2)}
    assert scenario_letters(25) == "ABE"


@pytest.mark.parametrize("k", [-1, 32, 100])
def test_scenario_index_out_of_range(k):
    with pytest.raises(ValueError):
        scenario_from_index(k)


@given(st.integers(0, 31))
def test_index_round_trip(k):
    s = scenario_from_index(k)
    assert index_of_scenario(s) == k
    assert scenario_from_index(index_of_scenario(s)) == s


def test_non_canonical_marker():
    assert index_of_scenario(ConstraintScenario({"UEFA": (1, 8)})) is None
    assert index_of_scenario(ConstraintScenario({"OFC": (0, 1)})) is None
    assert index_of_scenario(ConstraintScenario({"CONMEBOL": (0, 1)})) == 2


@pytest.mark.parametrize("bad", [(2, 1), (-1, 1), (0, 0)])
def test_scenario_rejects_bad_bounds(bad):
    with pytest.raises(ValueError):
        ConstraintScenario({"UEFA": bad})


def test_union_intersects_intervals():
    e1 = ConstraintScenario({"UEFA": (1, 4)})
    e2 = ConstraintScenario({"UEFA": (0, 2)})
    assert e1.union(e2) == ConstraintScenario({"UEFA": (1, 2)})


def test_bundled_2018_counts(wc2018):
    assert validate_instance(wc2018) == []
    expected = {
        "AFC": (0, 0, 1, 4),
        "CAF": (0, 0, 3, 2),
        "CONCACAF": (0, 1, 1, 1),
        "CONMEBOL": (2, 3, 0, 0),
        "UEFA": (6, 4, 3, 1),
    }
    for code, counts in expected.items():
        assert wc2018.confed_counts_per_pot(code) == counts
    assert wc2018.teams[wc2018.host].name == "Russia"
    assert wc2018.teams[wc2018.host].pot == 1


def test_bundled_2022_counts(wc2022):
    assert validate_instance(wc2022) == []
    expected = {
        "AFC": (1, 0, 3, 2),
        "CAF": (0, 0, 3, 2),
        "CONCACAF": (0, 2, 0, 2),
        "CONMEBOL": (2, 1, 0, 2),
        "OFC": (0, 0, 0, 1),
        "UEFA": (5, 5, 2, 1),
    }
    for code, counts in expected.items():
        assert wc2022.confed_counts_per_pot(code) == counts
    assert wc2022.teams[wc2022.host].name == "Qatar"


def test_placeholders_are_multi_member(wc2022):
    ipo1 = wc2022.teams[wc2022.index("IPO1")]
    assert ipo1.constraint_confeds == {"AFC", "CONMEBOL"}
    assert ipo1.confed_distribution["CONMEBOL"] == pytest.approx(0.7765, abs=1e-4)
    ipo2 = wc2022.teams[wc2022.index("IPO2")]
    assert ipo2.confed_distribution["CONCACAF"] == pytest.approx(0.7447, abs=1e-4)


def test_short_pot_is_reported(wc2018):
    doc = instance_to_dict(wc2018)
    doc["teams"] = [t for t in doc["teams"] if t["name"] != "Peru"]
    doc["pot_count"] = 4
    problems = validate_instance(instance_from_dict(doc))
    assert any("pot size != group count" in p for p in problems)


def test_team_invariants():
    assert Team.single("X", 1, "UEFA").problems() == []
    bad = Team("P", 1, frozenset({"AFC"}), {"AFC": 0.5, "CAF": 0.5})
    assert bad.problems()


def test_two_hosts_reported(example1):
    doc = instance_to_dict(example1)
    for t in doc["teams"][:2]:
        t["is_host"] = True
    assert any("host" in p for p in validate_instance(instance_from_dict(doc)))


def test_load_from_file(tmp_path, wc2022):
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(instance_to_dict(wc2022)))
    again = load_instance(path)
    assert [t.name for t in again.teams] == [t.name for t in wc2022.teams]
    assert again.confed_counts_per_pot("UEFA") == wc2022.confed_counts_per_pot("UEFA")


def test_assignment_slots_and_place(example1):
    a = GroupAssignment.empty(example1)
    assert not a.complete
    a = a.place(0, 0, 1)
    assert a.slots[(1, "A")] == 0
    with pytest.raises(ValueError):
        a.place(1, 0, 1)
    full = GroupAssignment.from_groups(example1, [["1", "3", "5"], ["2", "4", "6"]])
    assert full.complete
    assert len(full.pairs()) == 6
    with pytest.raises(ValueError):
        GroupAssignment.from_groups(example1, [["1", "2"]])


def test_instance_is_immutable(example1):
    assert isinstance(example1, DrawInstance)
    with pytest.raises(Exception):
        example1.group_count = 3


def test_types_pickle(wc2022):
    import pickle

    s = scenario_from_index(31)
    assert pickle.loads(pickle.dumps(s)) == s
    again = pickle.loads(pickle.dumps(wc2022))
    assert again == wc2022 and hash(again) == hash(wc2022)
