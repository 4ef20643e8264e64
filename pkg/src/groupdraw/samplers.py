"""Skip mechanism, unconstrained/rejection draws and host handling (single draws).

Bulk simulation lives in :mod:`groupdraw.simulation`; the functions here are
the readable reference versions used by the exact computations and tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constraints import GroupProfile, feasibility_oracle, group_within_bounds
from .model import (
    CANONICAL_CONSTRAINTS,
    SCENARIO_COUNT,
    ConstraintScenario,
    DrawInstance,
    GroupAssignment,
    constraint_bit,
)


class HostPolicy(enum.Enum):
    PRE_ASSIGN = "pre-assign"
    DRAW_AND_RELABEL = "relabel"

    @classmethod
    def parse(cls, value) -> HostPolicy:
        if isinstance(value, cls):
            return value
        aliases = {
            "pre-assign": cls.PRE_ASSIGN,
            "preassign": cls.PRE_ASSIGN,
            "relabel": cls.DRAW_AND_RELABEL,
            "draw-and-relabel": cls.DRAW_AND_RELABEL,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown host policy {value!r}") from None


@dataclass(frozen=True)
class RandomStream:
    """Reproducible random stream; equal (seed, stream_index, namespace) give equal draws.

    ``namespace`` separates the streams of different experiments that share
    a master seed.
    """

    seed: int
    stream_index: int = 0
    namespace: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        key = (*self.namespace, self.stream_index)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))


class InfeasibleScenario(ValueError):
    """No valid assignment exists for the instance under the scenario."""


class LookaheadExhausted(RuntimeError):
    """No group accepts the drawn team although a valid completion was promised."""


def default_pot_order(inst: DrawInstance) -> tuple[int, ...]:
    return tuple(range(1, inst.pot_count + 1))


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def skip_place(
    inst: DrawInstance,
    s: ConstraintScenario,
    draw_order: Sequence[Sequence[int]],
    policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL,
    pot_order: Optional[Sequence[int]] = None,
) -> tuple[GroupAssignment, int]:
    """Deterministic Skip placement of teams drawn in ``draw_order``.

    ``draw_order[q]`` lists the teams of pot ``pot_order[q]`` in the order
    their balls leave the urn. Each team goes to the alphabetically first
    group with a free slot for its pot from which the remaining teams can
    still be completed into a valid assignment. Returns the assignment
    (before any relabelling) and the number of placements that skipped the
    first free group.
    """
    pot_order = tuple(pot_order or default_pot_order(inst))
    oracle = feasibility_oracle(inst, s)
    a = GroupAssignment.empty(inst)
    host = inst.host if policy is HostPolicy.PRE_ASSIGN else None
    remaining = set(range(inst.team_count))
    if host is not None:
        a = a.place(host, 0, inst.teams[host].pot)
        remaining.discard(host)
    if not oracle.completion_exists(a, remaining):
        raise InfeasibleScenario(f"no valid assignment for {inst.name} under {s.describe()}")
    skips = 0
    for pot, teams in zip(pot_order, draw_order):
        for t in teams:
            if t == host:
                continue
            remaining.discard(t)
            first_free = None
            for g in range(inst.group_count):
                if a.groups[g][pot - 1] is not None:
                    continue
                if first_free is None:
                    first_free = g
                trial = a.place(t, g, pot)
                if oracle.completion_exists(trial, remaining):
                    a = trial
                    skips += g != first_free
                    break
            else:
                raise LookaheadExhausted(f"no group accepts {inst.teams[t].name}")
    return a, skips


def random_draw_order(
    inst: DrawInstance,
    rng: np.random.Generator,
    pot_order: Sequence[int],
    exclude: Optional[int] = None,
) -> list[list[int]]:
    pots = inst.pots
    out = []
    for p in pot_order:
        teams = [t for t in pots[p - 1] if t != exclude]
        out.append([teams[k] for k in rng.permutation(len(teams))])
    return out


def skip_draw(
    inst: DrawInstance,
    s: ConstraintScenario,
    policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL,
    pot_order: Optional[Sequence[int]] = None,
    rng=None,
) -> GroupAssignment:
    """One draw of the Skip mechanism; under DRAW_AND_RELABEL the host's group becomes the first label."""
    pot_order = tuple(pot_order or default_pot_order(inst))
    gen = _rng(rng)
    host = inst.host
    exclude = host if policy is HostPolicy.PRE_ASSIGN else None
    order = random_draw_order(inst, gen, pot_order, exclude)
    a, _ = skip_place(inst, s, order, policy, pot_order)
    if policy is HostPolicy.DRAW_AND_RELABEL and host is not None:
        a = relabel_host_to_first(a, host)
    return a


def unconstrained_draw(
    inst: DrawInstance, policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL, rng=None
) -> GroupAssignment:
    """Independent uniform permutation of every pot onto the groups."""
    gen = _rng(rng)
    G = inst.group_count
    host = inst.host
    rows = [[None] * inst.pot_count for _ in range(G)]
    for p, teams in enumerate(inst.pots):
        teams = list(teams)
        targets = list(range(G))
        if policy is HostPolicy.PRE_ASSIGN and host in teams:
            rows[0][p] = host
            teams.remove(host)
            targets.remove(0)
        for g, k in zip(targets, gen.permutation(len(teams))):
            rows[g][p] = teams[k]
    a = GroupAssignment(tuple(tuple(r) for r in rows), inst.group_labels)
    if policy is HostPolicy.DRAW_AND_RELABEL and host is not None:
        a = relabel_host_to_first(a, host)
    return a


def constraint_flags(a: GroupAssignment, inst: DrawInstance) -> int:
    """Bits (in scenario-index positions) of the canonical constraints that ``a`` satisfies."""
    if not a.complete:
        raise ValueError("constraint flags need a complete assignment")
    profiles = [GroupProfile.of(inst, a.members(g)) for g in range(len(a.groups))]
    flags = 0
    for pos, (_, code, lo, hi) in enumerate(CANONICAL_CONSTRAINTS):
        single = ConstraintScenario({code: (lo, hi)})
        if all(group_within_bounds(pr, single) for pr in profiles):
            flags |= constraint_bit(pos)
    return flags


def mask_from_flags(flags: int) -> int:
    """32-bit mask of scenarios accepted when exactly the constraints in ``flags`` hold."""
    mask = 0
    for k in range(SCENARIO_COUNT):
        if k & ~flags == 0:
            mask |= 1 << k
    return mask


def scenario_satisfaction_mask(a: GroupAssignment, inst: DrawInstance) -> int:
    """Bit ``k`` is set iff ``a`` is valid under scenario ``k``."""
    return mask_from_flags(constraint_flags(a, inst))


def relabel_host_to_first(a: GroupAssignment, host: int) -> GroupAssignment:
    """Swap the contents of the host's group and the first group."""
    g = a.group_of(host)
    if g is None:
        raise ValueError("host is not in the assignment")
    if g == 0:
        return a
    groups = list(a.groups)
    groups[0], groups[g] = groups[g], groups[0]
    return GroupAssignment(tuple(groups), a.labels)
