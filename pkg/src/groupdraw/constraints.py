"""Constraint checks on complete and partial assignments, deadlock detection."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Optional

from .model import ConstraintScenario, DrawInstance, GroupAssignment


@dataclass(frozen=True)
class GroupProfile:
    """Confederation counts of the teams already in one group.

    A team with several constraint memberships (a play-off placeholder)
    increments every one of its codes.
    """

    counts: Mapping[str, int]
    filled_slots: frozenset[int] = field(default_factory=frozenset)

    @classmethod
    def of(cls, inst: DrawInstance, members: Iterable[int]) -> GroupProfile:
        counts: dict[str, int] = {}
        pots = set()
        for i in members:
            team = inst.teams[i]
            pots.add(team.pot)
            for code in team.constraint_confeds:
                counts[code] = counts.get(code, 0) + 1
        return cls(counts, frozenset(pots))


def group_within_max(profile: GroupProfile, s: ConstraintScenario) -> bool:
    """Upper bounds only; lower bounds bind complete groups and are not checked here."""
    return all(profile.counts.get(code, 0) <= hi for code, (_, hi) in s.bounds.items())


def group_within_bounds(profile: GroupProfile, s: ConstraintScenario) -> bool:
    return all(lo <= profile.counts.get(code, 0) <= hi for code, (lo, hi) in s.bounds.items())


def assignment_valid(a: GroupAssignment, s: ConstraintScenario, inst: DrawInstance) -> bool:
    if not a.complete:
        raise ValueError("assignment_valid needs a complete assignment")
    return all(
        group_within_bounds(GroupProfile.of(inst, a.members(g)), s) for g in range(len(a.groups))
    )


class FeasibilityOracle:
    """Memoized completion search for one (instance, scenario) pair.

    Teams with the same membership among the bounded confederations are
    interchangeable, so the search runs over class counts. Groups are
    described by (filled pots, capped counts) and sorted, so groups in the
    same state collapse into one search branch and one memo key.
    """

    def __init__(self, inst: DrawInstance, s: ConstraintScenario):
        self.inst = inst
        self.scenario = s
        P = inst.pot_count
        self.codes = tuple(s.bounds)
        self.lo = tuple(s.bounds[c][0] for c in self.codes)
        self.hi = tuple(min(s.bounds[c][1], P) for c in self.codes)
        # A count above ``cap`` carries no extra information for the search.
        self.cap = tuple(hi if hi < P else lo for lo, hi in zip(self.lo, self.hi))
        memberships = [
            tuple(int(c in t.constraint_confeds) for c in self.codes) for t in inst.teams
        ]
        self.classes = tuple(sorted(set(memberships)))
        lookup = {m: k for k, m in enumerate(self.classes)}
        self.team_class = tuple(lookup[m] for m in memberships)
        self._min_codes = tuple(ci for ci, lo in enumerate(self.lo) if lo > 0)
        self._memo: dict = {}
        self.nodes = 0

    # -- state helpers -----------------------------------------------------

    def add(self, counts: tuple[int, ...], k: int) -> Optional[tuple[int, ...]]:
        """Counts after adding a team of class ``k``; ``None`` if a max-bound breaks."""
        out = []
        for ci, bit in enumerate(self.classes[k]):
            v = counts[ci] + bit
            if v > self.hi[ci]:
                return None
            out.append(min(v, self.cap[ci]))
        return tuple(out)

    def descriptor(self, members: Iterable[int]) -> Optional[tuple[int, tuple[int, ...]]]:
        counts = (0,) * len(self.codes)
        mask = 0
        for i in members:
            counts = self.add(counts, self.team_class[i])
            if counts is None:
                return None
            mask |= 1 << (self.inst.teams[i].pot - 1)
        return mask, counts

    def remaining_counts(self, teams: Iterable[int]) -> tuple[tuple[int, ...], ...]:
        rem = [[0] * len(self.classes) for _ in range(self.inst.pot_count)]
        for i in teams:
            rem[self.inst.teams[i].pot - 1][self.team_class[i]] += 1
        return tuple(tuple(r) for r in rem)

    def _hopeless(self, descs, remaining) -> bool:
        for ci in self._min_codes:
            lo = self.lo[ci]
            supply_by_pot = [
                sum(n for k, n in enumerate(pot) if self.classes[k][ci]) for pot in remaining
            ]
            total_deficit = 0
            for mask, counts in descs:
                deficit = lo - counts[ci]
                if deficit <= 0:
                    continue
                total_deficit += deficit
                open_pots = sum(
                    1 for p, n in enumerate(supply_by_pot) if n > 0 and not mask >> p & 1
                )
                if deficit > open_pots:
                    return True
            if total_deficit > sum(supply_by_pot):
                return True
        return False

    # -- search ------------------------------------------------------------

    def feasible(self, descs: tuple, remaining: tuple) -> bool:
        descs = tuple(sorted(descs))
        key = (descs, remaining)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self.nodes += 1
        result = self._search(descs, remaining)
        self._memo[key] = result
        return result

    def _search(self, descs, remaining) -> bool:
        if self._hopeless(descs, remaining):
            return False
        pot = next((p for p, r in enumerate(remaining) if any(r)), None)
        if pot is None:
            return all(
                counts[ci] >= self.lo[ci] for _, counts in descs for ci in self._min_codes
            )
        k = next(k for k, n in enumerate(remaining[pot]) if n)
        rem = list(remaining)
        row = list(rem[pot])
        row[k] -= 1
        rem[pot] = tuple(row)
        rem_t = tuple(rem)
        tried = set()
        for g, (mask, counts) in enumerate(descs):
            if mask >> pot & 1 or (mask, counts) in tried:
                continue
            tried.add((mask, counts))
            new = self.add(counts, k)
            if new is None:
                continue
            child = descs[:g] + ((mask | 1 << pot, new),) + descs[g + 1 :]
            if self.feasible(child, rem_t):
                return True
        return False

    def completion_exists(
        self, a: GroupAssignment, remaining: Optional[Iterable[int]] = None
    ) -> bool:
        if remaining is None:
            placed = a.placed()
            remaining = [i for i in range(self.inst.team_count) if i not in placed]
        descs = []
        for g in range(len(a.groups)):
            d = self.descriptor(a.members(g))
            if d is None:
                return False
            descs.append(d)
        return self.feasible(tuple(descs), self.remaining_counts(remaining))


@lru_cache(maxsize=128)
def feasibility_oracle(inst: DrawInstance, s: ConstraintScenario) -> FeasibilityOracle:
    return FeasibilityOracle(inst, s)


def completion_exists(
    a: GroupAssignment,
    remaining: Optional[Iterable[int]],
    s: ConstraintScenario,
    inst: DrawInstance,
) -> bool:
    """True iff the unplaced teams can fill the free slots so that every bound holds."""
    return feasibility_oracle(inst, s).completion_exists(a, remaining)


def pair_support(inst: DrawInstance, s: ConstraintScenario) -> set[tuple[int, int]]:
    """Cross-pot pairs (i < j) that share a group in at least one valid assignment."""
    oracle = feasibility_oracle(inst, s)
    empty = GroupAssignment.empty(inst)
    out = set()
    for i in range(inst.team_count):
        for j in range(i + 1, inst.team_count):
            ti, tj = inst.teams[i], inst.teams[j]
            if ti.pot == tj.pot:
                continue
            a = empty.place(i, 0, ti.pot).place(j, 0, tj.pot)
            if oracle.completion_exists(a):
                out.add((i, j))
    return out
