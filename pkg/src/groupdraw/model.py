"""Domain types: tournament instances, constraint scenarios and group assignments."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence, Union

# (letter, confederation, min per group, max per group); letter order A..E maps
# to bits 4..0 of a scenario index.
CANONICAL_CONSTRAINTS: tuple[tuple[str, str, int, int], ...] = (
    ("A", "AFC", 0, 1),
    ("B", "CAF", 0, 1),
    ("C", "CONCACAF", 0, 1),
    ("D", "CONMEBOL", 0, 1),
    ("E", "UEFA", 1, 2),
)
SCENARIO_COUNT = 2 ** len(CANONICAL_CONSTRAINTS)
FULL_SCENARIO = SCENARIO_COUNT - 1

BUNDLED_INSTANCES = ("wc2018", "wc2022", "example1")


def constraint_bit(position: int) -> int:
    """Bit of the scenario index that toggles the constraint at ``position`` (0 = A)."""
    return 1 << (len(CANONICAL_CONSTRAINTS) - 1 - position)


@dataclass(frozen=True)
class Confederation:
    code: str


@dataclass(frozen=True)
class Team:
    name: str
    pot: int
    constraint_confeds: frozenset[str]
    confed_distribution: Mapping[str, float] = field(hash=False)
    is_host: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraint_confeds", frozenset(self.constraint_confeds))
        object.__setattr__(
            self, "confed_distribution", MappingProxyType(dict(self.confed_distribution))
        )

    def __reduce__(self):
        # Mapping proxies do not pickle; rebuild from a plain dict.
        args = (self.name, self.pot, self.constraint_confeds, dict(self.confed_distribution), self.is_host)
        return (type(self), args)

    @classmethod
    def single(cls, name: str, pot: int, confed: str, is_host: bool = False) -> Team:
        return cls(name, pot, frozenset([confed]), {confed: 1.0}, is_host)

    @property
    def is_placeholder(self) -> bool:
        return len(self.constraint_confeds) > 1

    def problems(self) -> list[str]:
        out = []
        dist = self.confed_distribution
        if any(p < 0.0 or p > 1.0 for p in dist.values()):
            out.append(f"{self.name}: distribution probability outside [0, 1]")
        if abs(sum(dist.values()) - 1.0) > 1e-9:
            out.append(f"{self.name}: distribution sums to {sum(dist.values())!r}, not 1")
        for code, p in dist.items():
            if p > 0 and code not in self.constraint_confeds:
                out.append(f"{self.name}: {code} has positive probability but is not a member")
        if not self.constraint_confeds:
            out.append(f"{self.name}: no confederation membership")
        if len(self.constraint_confeds) == 1:
            (code,) = self.constraint_confeds
            if abs(dist.get(code, 0.0) - 1.0) > 1e-9:
                out.append(f"{self.name}: single-confederation team needs probability 1")
        return out


@dataclass(frozen=True)
class DrawInstance:
    """Teams seeded into pots; every group receives one team from each pot."""

    teams: tuple[Team, ...]
    group_count: int
    pot_count: int
    group_labels: tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "teams", tuple(self.teams))
        if not self.group_labels:
            object.__setattr__(self, "group_labels", default_labels(self.group_count))
        else:
            object.__setattr__(self, "group_labels", tuple(self.group_labels))

    @property
    def team_count(self) -> int:
        return len(self.teams)

    @property
    def host(self) -> Optional[int]:
        hosts = [i for i, t in enumerate(self.teams) if t.is_host]
        return hosts[0] if hosts else None

    @property
    def pots(self) -> tuple[tuple[int, ...], ...]:
        """Team indices per pot (pot 1 first), in file order."""
        return tuple(
            tuple(i for i, t in enumerate(self.teams) if t.pot == p)
            for p in range(1, self.pot_count + 1)
        )

    @property
    def confederations(self) -> tuple[str, ...]:
        codes: set[str] = set()
        for t in self.teams:
            codes |= t.constraint_confeds
            codes |= {c for c, p in t.confed_distribution.items() if p > 0}
        return tuple(sorted(codes))

    def index(self, name: str) -> int:
        for i, t in enumerate(self.teams):
            if t.name == name:
                return i
        raise KeyError(name)

    def confed_counts_per_pot(self, code: str) -> tuple[int, ...]:
        return tuple(
            sum(1 for i in pot if code in self.teams[i].constraint_confeds) for pot in self.pots
        )

    def __hash__(self) -> int:
        return hash((self.name, tuple(t.name for t in self.teams), self.group_count))


def default_labels(n: int) -> tuple[str, ...]:
    if n <= 26:
        return tuple(string.ascii_uppercase[:n])
    return tuple(f"G{i + 1:03d}" for i in range(n))


@dataclass(frozen=True)
class ConstraintScenario:
    """Per-confederation (min, max) bounds on the number of teams in a group.

    Confederations missing from ``bounds`` are unbounded.
    """

    bounds: Mapping[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for code, (lo, hi) in sorted(dict(self.bounds).items()):
            lo, hi = int(lo), int(hi)
            if lo < 0 or hi < 1 or lo > hi:
                raise ValueError(f"invalid bound for {code}: ({lo}, {hi})")
            clean[code] = (lo, hi)
        object.__setattr__(self, "bounds", MappingProxyType(clean))

    def __hash__(self) -> int:
        return hash(tuple(self.bounds.items()))

    def __reduce__(self):
        return (type(self), (dict(self.bounds),))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConstraintScenario):
            return NotImplemented
        return dict(self.bounds) == dict(other.bounds)

    def __bool__(self) -> bool:
        return bool(self.bounds)

    def union(self, other: ConstraintScenario) -> ConstraintScenario:
        """Both sets of bounds at once (intersection of intervals per confederation)."""
        merged = dict(self.bounds)
        for code, (lo, hi) in other.bounds.items():
            if code in merged:
                a, b = merged[code]
                merged[code] = (max(a, lo), min(b, hi))
            else:
                merged[code] = (lo, hi)
        return ConstraintScenario(merged)

    def describe(self) -> str:
        idx = index_of_scenario(self)
        if idx is not None:
            return scenario_letters(idx)
        return ";".join(f"{c}:{lo}-{hi}" for c, (lo, hi) in self.bounds.items()) or "none"


def scenario_from_index(k: int) -> ConstraintScenario:
    """The ``k``-th set of geographic constraints (0 = none, 31 = all of A-E)."""
    if not 0 <= k < SCENARIO_COUNT:
        raise ValueError(f"scenario index must be in 0..{SCENARIO_COUNT - 1}, got {k}")
    bounds = {}
    for pos, (_, code, lo, hi) in enumerate(CANONICAL_CONSTRAINTS):
        if k & constraint_bit(pos):
            bounds[code] = (lo, hi)
    return ConstraintScenario(bounds)


def index_of_scenario(s: ConstraintScenario) -> Optional[int]:
    """Inverse of :func:`scenario_from_index`; ``None`` marks a non-canonical scenario."""
    k = 0
    canonical = {code: (pos, lo, hi) for pos, (_, code, lo, hi) in enumerate(CANONICAL_CONSTRAINTS)}
    for code, bound in s.bounds.items():
        if code not in canonical:
            return None
        pos, lo, hi = canonical[code]
        if bound != (lo, hi):
            return None
        k |= constraint_bit(pos)
    return k


def scenario_letters(k: int) -> str:
    letters = [
        letter for pos, (letter, *_rest) in enumerate(CANONICAL_CONSTRAINTS) if k & constraint_bit(pos)
    ]
    return "".join(letters) or "-"


def active_constraint_count(k: int) -> int:
    return bin(k).count("1")


@dataclass(frozen=True)
class GroupAssignment:
    """Teams per (group, pot) slot.

    ``groups[g][p]`` is the index of the team from pot ``p + 1`` in the group
    with label ``labels[g]``, or ``None`` for an empty slot.
    """

    groups: tuple[tuple[Optional[int], ...], ...]
    labels: tuple[str, ...]

    @classmethod
    def empty(cls, inst: DrawInstance) -> GroupAssignment:
        return cls(
            tuple((None,) * inst.pot_count for _ in range(inst.group_count)), inst.group_labels
        )

    @classmethod
    def from_groups(
        cls, inst: DrawInstance, groups: Sequence[Iterable[Union[int, str]]]
    ) -> GroupAssignment:
        """Build from per-group team lists (indices or names) in label order."""
        rows = []
        for members in groups:
            row: list[Optional[int]] = [None] * inst.pot_count
            for m in members:
                i = inst.index(m) if isinstance(m, str) else int(m)
                p = inst.teams[i].pot - 1
                if row[p] is not None:
                    raise ValueError(f"two teams from pot {p + 1} in one group")
                row[p] = i
            rows.append(tuple(row))
        a = cls(tuple(rows), inst.group_labels)
        a.check_unique()
        return a

    @property
    def slots(self) -> dict[tuple[int, str], Optional[int]]:
        return {
            (p + 1, label): row[p]
            for label, row in zip(self.labels, self.groups)
            for p in range(len(row))
        }

    @property
    def complete(self) -> bool:
        return all(t is not None for row in self.groups for t in row)

    def check_unique(self) -> None:
        placed = [t for row in self.groups for t in row if t is not None]
        if len(placed) != len(set(placed)):
            raise ValueError("a team occupies more than one slot")

    def placed(self) -> set[int]:
        return {t for row in self.groups for t in row if t is not None}

    def members(self, g: int) -> list[int]:
        return [t for t in self.groups[g] if t is not None]

    def group_of(self, team: int) -> Optional[int]:
        for g, row in enumerate(self.groups):
            if team in row:
                return g
        return None

    def place(self, team: int, g: int, pot: int) -> GroupAssignment:
        """Copy with ``team`` placed in group ``g`` (``pot`` is 1-based)."""
        if self.groups[g][pot - 1] is not None:
            raise ValueError(f"slot (pot {pot}, group {self.labels[g]}) already filled")
        row = list(self.groups[g])
        row[pot - 1] = team
        groups = list(self.groups)
        groups[g] = tuple(row)
        return GroupAssignment(tuple(groups), self.labels)

    def compositions(self) -> frozenset[frozenset[int]]:
        """Group contents without labels."""
        return frozenset(frozenset(self.members(g)) for g in range(len(self.groups)))

    def pairs(self) -> list[tuple[int, int]]:
        """Unordered same-group pairs (i < j)."""
        out = []
        for g in range(len(self.groups)):
            m = sorted(self.members(g))
            for a in range(len(m)):
                for b in range(a + 1, len(m)):
                    out.append((m[a], m[b]))
        return out

    def named(self, inst: DrawInstance) -> dict[str, list[str]]:
        return {
            label: [inst.teams[t].name for t in row if t is not None]
            for label, row in zip(self.labels, self.groups)
        }


# --- validation -------------------------------------------------------------


def validate_instance(inst: DrawInstance) -> list[str]:
    """Violated instance invariants; an empty list means the instance is valid."""
    problems: list[str] = []
    if inst.group_count < 1:
        problems.append("group count must be positive")
    if inst.pot_count < 1:
        problems.append("pot count must be positive")
    if len(inst.group_labels) != inst.group_count:
        problems.append("group label count != group count")
    if list(inst.group_labels) != sorted(set(inst.group_labels)):
        problems.append("group labels must be strictly ordered")
    names = [t.name for t in inst.teams]
    if len(names) != len(set(names)):
        problems.append("team names must be unique")
    for p in range(1, inst.pot_count + 1):
        size = sum(1 for t in inst.teams if t.pot == p)
        if size != inst.group_count:
            problems.append(f"pot size != group count: pot {p} has {size} teams, expected {inst.group_count}")
    for t in inst.teams:
        if not 1 <= t.pot <= inst.pot_count:
            problems.append(f"{t.name}: pot {t.pot} outside 1..{inst.pot_count}")
        problems.extend(t.problems())
    hosts = [t for t in inst.teams if t.is_host]
    if len(hosts) > 1:
        problems.append("more than one host")
    return problems


# --- instance files ----------------------------------------------------------


def _team_from_record(rec: Mapping) -> Team:
    from .metrics import placeholder_distribution  # avoid import cycle at module load

    name = rec["name"]
    pot = int(rec["pot"])
    if "confederation" in rec:
        confeds = {rec["confederation"]}
    else:
        confeds = set(rec.get("constraint_confeds", ()))
    dist = rec.get("confed_distribution")
    if dist is None and "playoff" in rec:
        dist = placeholder_distribution(rec["playoff"])
    if dist is None:
        if len(confeds) != 1:
            raise ValueError(f"{name}: placeholder needs confed_distribution or playoff")
        dist = {next(iter(confeds)): 1.0}
    if not confeds:
        confeds = {c for c, p in dist.items() if p > 0}
    return Team(name, pot, frozenset(confeds), dict(dist), bool(rec.get("is_host", False)))


def instance_from_dict(doc: Mapping) -> DrawInstance:
    teams = tuple(_team_from_record(r) for r in doc["teams"])
    group_count = int(doc["group_count"])
    pot_count = int(doc.get("pot_count", max(t.pot for t in teams)))
    labels = tuple(doc.get("group_labels", ())) or default_labels(group_count)
    return DrawInstance(teams, group_count, pot_count, labels, doc.get("name", ""))


def instance_to_dict(inst: DrawInstance) -> dict:
    return {
        "name": inst.name,
        "group_count": inst.group_count,
        "pot_count": inst.pot_count,
        "group_labels": list(inst.group_labels),
        "teams": [
            {
                "name": t.name,
                "pot": t.pot,
                "constraint_confeds": sorted(t.constraint_confeds),
                "confed_distribution": dict(t.confed_distribution),
                "is_host": t.is_host,
            }
            for t in inst.teams
        ],
    }


def load_instance(source: Union[str, Path]) -> DrawInstance:
    """Load a bundled instance by name (``wc2018``, ``wc2022``, ``example1``) or a JSON file."""
    if isinstance(source, str) and source in BUNDLED_INSTANCES:
        text = resources.files("groupdraw.data").joinpath(f"{source}.json").read_text()
    else:
        text = Path(source).read_text()
    return instance_from_dict(json.loads(text))
