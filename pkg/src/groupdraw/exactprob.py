"""Exact probabilities for verification: validity DP, enumeration, exact Skip distribution."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .constraints import assignment_valid
from .model import ConstraintScenario, DrawInstance, GroupAssignment
from .samplers import HostPolicy, default_pot_order, relabel_host_to_first, skip_place

Number = Union[Fraction, float]
ENUMERATION_LIMIT = 10**7


class InstanceTooLarge(ValueError):
    pass


def _pot_classes(inst: DrawInstance, keys: Sequence) -> tuple[list, tuple[tuple[int, ...], ...]]:
    """Distinct per-team keys and their counts per pot."""
    classes = sorted(set(keys))
    lookup = {k: c for c, k in enumerate(classes)}
    counts = []
    for pot in inst.pots:
        row = [0] * len(classes)
        for t in pot:
            row[lookup[keys[t]]] += 1
        counts.append(tuple(row))
    return classes, tuple(counts)


def _membership_keys(inst: DrawInstance, s: ConstraintScenario) -> list[tuple[int, ...]]:
    codes = tuple(s.bounds)
    return [tuple(int(c in t.constraint_confeds) for c in codes) for t in inst.teams]


def _group_ok(total: Sequence[int], bounds: Sequence[tuple[int, int]]) -> bool:
    return all(lo <= v <= hi for v, (lo, hi) in zip(total, bounds))


class _GroupByGroupDP:
    """Fill groups one at a time; each group takes a uniform random remaining team per pot.

    Returns, for the remaining pots, P(all groups valid) and
    E[sum of group weights * 1{all valid}].
    """

    def __init__(self, inst, s, keys, weight=None, exact=True):
        self.codes = tuple(s.bounds)
        self.bounds = tuple(s.bounds[c] for c in self.codes)
        self.classes, self.start = _pot_classes(inst, keys)
        self.exact = exact
        self.weight = weight
        self.one = Fraction(1) if exact else 1.0
        self.zero = Fraction(0) if exact else 0.0
        self.memo: dict = {}

    def membership(self, k):
        return self.classes[k][0] if self.weight is not None else self.classes[k]

    def ratio(self, n, total):
        return Fraction(n, total) if self.exact else n / total

    def run(self):
        return self.solve(self.start)

    def solve(self, state):
        if state in self.memo:
            return self.memo[state]
        if not any(any(r) for r in state):
            out = (self.one, self.zero)
            self.memo[state] = out
            return out
        prob, expect = self.zero, self.zero
        choices = [[k for k, n in enumerate(r) if n] for r in state]
        totals = [sum(r) for r in state]
        nc = len(self.codes)
        for combo in itertools.product(*choices):
            total = [0] * nc
            for k in combo:
                for ci, bit in enumerate(self.membership(k)):
                    total[ci] += bit
            if not _group_ok(total, self.bounds):
                continue
            p = self.one
            nxt = []
            for pot, k in enumerate(combo):
                p = p * self.ratio(state[pot][k], totals[pot])
                row = list(state[pot])
                row[k] -= 1
                nxt.append(tuple(row))
            sub_p, sub_e = self.solve(tuple(nxt))
            prob += p * sub_p
            if self.weight is not None:
                w = sum(
                    self.weight(combo[x], combo[y])
                    for x in range(len(combo))
                    for y in range(x + 1, len(combo))
                )
                expect += p * (w * sub_p + sub_e)
        out = (prob, expect)
        self.memo[state] = out
        return out


def validity_probability(
    inst: DrawInstance, s: ConstraintScenario, exact: bool = True
) -> Number:
    """Probability that an unconstrained uniform draw satisfies every bound of ``s``.

    With ``exact`` the result is a :class:`fractions.Fraction`.
    """
    if not s.bounds:
        return Fraction(1) if exact else 1.0
    dp = _GroupByGroupDP(inst, s, _membership_keys(inst, s), exact=exact)
    return dp.run()[0]


def expected_intra_confed(inst: DrawInstance, s: ConstraintScenario) -> float:
    """Expected intra-confederation weight of a uniform draw conditioned on validity."""
    codes = inst.confederations
    member = _membership_keys(inst, s)
    keys = [
        (member[i], tuple(t.confed_distribution.get(c, 0.0) for c in codes))
        for i, t in enumerate(inst.teams)
    ]
    classes = sorted(set(keys))

    def weight(a, b):
        return float(np.dot(classes[a][1], classes[b][1]))

    dp = _GroupByGroupDP(inst, s, keys, weight=weight, exact=False)
    prob, expect = dp.run()
    if prob == 0:
        raise ValueError("no valid assignment")
    return expect / prob


def _labeled_outcome_count(inst: DrawInstance) -> int:
    return math.factorial(inst.group_count) ** inst.pot_count


def enumerate_valid(inst: DrawInstance, s: ConstraintScenario) -> list[GroupAssignment]:
    """Every labelled assignment that satisfies ``s`` (small instances only)."""
    if _labeled_outcome_count(inst) > ENUMERATION_LIMIT:
        raise InstanceTooLarge("too many labelled outcomes to enumerate")
    G, pots = inst.group_count, inst.pots
    out = []
    for perms in itertools.product(*(itertools.permutations(p) for p in pots)):
        groups = tuple(tuple(perm[g] for perm in perms) for g in range(G))
        a = GroupAssignment(groups, inst.group_labels)
        if assignment_valid(a, s, inst):
            out.append(a)
    return out


def uniform_distribution(inst: DrawInstance, s: ConstraintScenario) -> dict[GroupAssignment, Fraction]:
    valid = enumerate_valid(inst, s)
    if not valid:
        raise ValueError("no valid assignment")
    return {a: Fraction(1, len(valid)) for a in valid}


def exact_skip_distribution(
    inst: DrawInstance,
    s: ConstraintScenario,
    policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL,
    pot_order: Optional[Sequence[int]] = None,
) -> dict[GroupAssignment, Fraction]:
    """Exact distribution of labelled Skip outcomes, averaging over every draw order."""
    pot_order = tuple(pot_order or default_pot_order(inst))
    host = inst.host
    exclude = host if policy is HostPolicy.PRE_ASSIGN else None
    urns = [[t for t in inst.pots[p - 1] if t != exclude] for p in pot_order]
    total = math.prod(math.factorial(len(u)) for u in urns)
    if total > ENUMERATION_LIMIT:
        raise InstanceTooLarge("too many draw orders to enumerate")
    dist: dict[GroupAssignment, Fraction] = {}
    weight = Fraction(1, total)
    for order in itertools.product(*(itertools.permutations(u) for u in urns)):
        a, _ = skip_place(inst, s, order, policy, pot_order)
        if policy is HostPolicy.DRAW_AND_RELABEL and host is not None:
            a = relabel_host_to_first(a, host)
        dist[a] = dist.get(a, Fraction(0)) + weight
    return dist


def composition_distribution(dist: dict[GroupAssignment, Number]) -> dict[frozenset, Number]:
    """Collapse labelled outcomes into unlabelled group compositions."""
    out: dict = {}
    for a, p in dist.items():
        key = a.compositions()
        out[key] = out.get(key, 0) + p
    return out


def matchup_matrix(inst: DrawInstance, dist: dict[GroupAssignment, Number]) -> list[list[Number]]:
    """Exact same-group probability for every team pair under ``dist``."""
    n = inst.team_count
    m = [[Fraction(0)] * n for _ in range(n)]
    for a, p in dist.items():
        for i, j in a.pairs():
            m[i][j] += p
            m[j][i] += p
    return m


@lru_cache(maxsize=None)
def example1_instance() -> DrawInstance:
    from .model import load_instance

    return load_instance("example1")


EXAMPLE1_SCENARIO = ConstraintScenario({"X": (0, 2)})
