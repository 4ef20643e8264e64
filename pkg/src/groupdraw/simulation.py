"""Bulk simulation: many unconstrained or Skip draws, reduced to accumulators.

Work is cut into fixed blocks, each with its own random stream, and blocks
are merged in order; the result depends on (seed, iterations, block size)
but not on the number of workers.
"""

from __future__ import annotations

import itertools
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .constraints import feasibility_oracle
from .metrics import MatchupAccumulator, pair_weight_matrix
from .model import (
    CANONICAL_CONSTRAINTS,
    ConstraintScenario,
    DrawInstance,
    GroupAssignment,
    index_of_scenario,
)
from .samplers import (
    HostPolicy,
    InfeasibleScenario,
    LookaheadExhausted,
    RandomStream,
    default_pot_order,
    skip_draw,
)

log = logging.getLogger(__name__)

UNIFORM_BLOCK = 1 << 18
SKIP_BLOCK = 1 << 14

_UNIFORM_NAMESPACE = 0
_SKIP_NAMESPACE = 1


def _blocks(iterations: int, block_size: int) -> list[tuple[int, int]]:
    """(stream index, draw count) per block."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    full, rest = divmod(iterations, block_size)
    out = [(b, block_size) for b in range(full)]
    if rest:
        out.append((full, rest))
    return out


def _check_pots(inst: DrawInstance) -> None:
    if any(len(p) != inst.group_count for p in inst.pots):
        raise ValueError("every pot must hold one team per group")


def _map(fn, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# --- unconstrained draws ---------------------------------------------------------------


@dataclass
class RejectionResult:
    """Unconstrained draws split by which canonical constraints they satisfy.

    ``pattern`` ``f`` collects draws satisfying exactly the constraints
    whose scenario bits are set in ``f``. Scenario ``k`` accepts a draw iff
    every bit of ``k`` is in its pattern, so one stream of draws serves
    every scenario at once.
    """

    instance_name: str
    pair_counts: np.ndarray
    pattern_draws: np.ndarray
    psi_sum: np.ndarray
    psi_min: np.ndarray
    psi_max: np.ndarray

    @property
    def draws(self) -> int:
        return int(self.pattern_draws.sum())

    def _patterns(self, k: int) -> list[int]:
        return [f for f in range(len(self.pattern_draws)) if k & ~f == 0]

    def accepted(self, k: int) -> int:
        return int(sum(self.pattern_draws[f] for f in self._patterns(k)))

    def validity(self, k: int) -> float:
        return self.accepted(k) / self.draws

    def for_scenario(self, k: int) -> MatchupAccumulator:
        fs = self._patterns(k)
        n = self.pair_counts.shape[1]
        acc = MatchupAccumulator(n, instance_name=self.instance_name)
        for f in fs:
            acc.pair_counts += self.pair_counts[f]
            acc.psi_sum += float(self.psi_sum[f])
            acc.psi_min = min(acc.psi_min, float(self.psi_min[f]))
            acc.psi_max = max(acc.psi_max, float(self.psi_max[f]))
        acc.draw_count = self.accepted(k)
        return acc

    def merge(self, other: RejectionResult) -> RejectionResult:
        if other.pair_counts.shape != self.pair_counts.shape:
            raise ValueError("cannot merge results of different instances")
        return RejectionResult(
            self.instance_name,
            self.pair_counts + other.pair_counts,
            self.pattern_draws + other.pattern_draws,
            self.psi_sum + other.psi_sum,
            np.minimum(self.psi_min, other.psi_min),
            np.maximum(self.psi_max, other.psi_max),
        )


CANONICAL_BOUNDS: tuple[tuple[str, int, int], ...] = tuple(
    (code, lo, hi) for _, code, lo, hi in CANONICAL_CONSTRAINTS
)


def _constraint_tables(inst: DrawInstance, constraints: Sequence[tuple[str, int, int]]):
    """Membership matrix, bounds and pattern bits; the first constraint gets the highest bit."""
    C = len(constraints)
    member = np.array(
        [[int(code in t.constraint_confeds) for code, _, _ in constraints] for t in inst.teams],
        dtype=np.int64,
    ).reshape(inst.team_count, C)
    lo = np.array([c[1] for c in constraints], dtype=np.int64)
    hi = np.array([c[2] for c in constraints], dtype=np.int64)
    bits = np.array([1 << (C - 1 - i) for i in range(C)], dtype=np.int64)
    return member, lo, hi, bits


def _uniform_job(job) -> RejectionResult:
    inst, seed, stream, n, constraints = job
    member, lo, hi, bits = _constraint_tables(inst, constraints)
    npat = 1 << len(constraints)
    nt = inst.team_count
    pair_counts = np.zeros((npat, nt, nt), dtype=np.int64)
    pattern_draws = np.zeros(npat, dtype=np.int64)
    psi_sum = np.zeros(npat)
    psi_min = np.full(npat, np.inf)
    psi_max = np.full(npat, -np.inf)
    pot_teams = np.array(inst.pots, dtype=np.int64)
    rng = RandomStream(seed, stream, (_UNIFORM_NAMESPACE,)).generator()
    _kernels.rejection_block(
        rng, n, pot_teams, member, lo, hi, bits, pair_weight_matrix(inst), _kernels.FACTORIALS,
        pair_counts, pattern_draws, psi_sum, psi_min, psi_max,
    )
    return RejectionResult(inst.name, pair_counts, pattern_draws, psi_sum, psi_min, psi_max)


def simulate_unconstrained(
    inst: DrawInstance,
    iterations: int,
    seed: int = 0,
    workers: int = 1,
    block_size: int = UNIFORM_BLOCK,
    constraints: Sequence[tuple[str, int, int]] = CANONICAL_BOUNDS,
) -> RejectionResult:
    """Uniform unconstrained draws with the acceptance of every constraint subset recorded.

    ``constraints`` lists (confederation, min, max) bounds; with the default
    canonical list, pattern bits coincide with scenario indices. Host
    handling is irrelevant here: the host policy only moves labels, and
    nothing accumulated depends on labels.
    """
    _check_pots(inst)
    jobs = [(inst, seed, b, n, tuple(constraints)) for b, n in _blocks(iterations, block_size)]
    parts = _map(_uniform_job, jobs, workers)
    out = parts[0]
    for part in parts[1:]:
        out = out.merge(part)
    return out


# --- Skip draws ---------------------------------------------------------------------------


class KernelUnsupported(ValueError):
    """The instance or scenario does not fit the compiled Skip kernel's state encoding."""


@dataclass(frozen=True)
class SkipTables:
    """Instance, scenario and host policy flattened for the compiled Skip kernel."""

    urns: np.ndarray
    urn_sizes: np.ndarray
    pot_of_position: np.ndarray
    team_class: np.ndarray
    pot_counts: np.ndarray
    trans: np.ndarray
    class_has: np.ndarray
    need: np.ndarray
    min_codes: np.ndarray
    desc_bits: int
    count_bits: int
    host: int

    def args(self) -> tuple:
        return (
            self.urns, self.urn_sizes, self.pot_of_position, self.team_class, self.pot_counts,
            self.trans, self.class_has, self.need, self.min_codes, self.desc_bits,
            self.count_bits, self.host,
        )


def skip_tables(
    inst: DrawInstance,
    s: ConstraintScenario,
    policy: HostPolicy,
    pot_order: Sequence[int],
) -> SkipTables:
    """Lookup tables for the compiled Skip kernel; raises :class:`KernelUnsupported`."""
    oracle = feasibility_oracle(inst, s)
    G, P = inst.group_count, inst.pot_count
    pot_order = tuple(pot_order)
    if sorted(pot_order) != list(range(1, P + 1)):
        raise ValueError(f"pot order {pot_order} is not a permutation of the pots")
    host = inst.host if policy is HostPolicy.PRE_ASSIGN else None
    if host is not None and inst.teams[host].pot != pot_order[0]:
        raise KernelUnsupported("a pre-assigned host must sit in the first pot drawn")

    nc = len(oracle.codes)
    radix = [c + 1 for c in oracle.cap]
    all_counts = list(itertools.product(*(range(r) for r in radix)))

    def code_of(counts) -> int:
        code = 0
        for v, r in zip(counts, radix):
            code = code * r + v
        return code

    nk = len(oracle.classes)
    trans = np.full((len(all_counts), nk), -1, dtype=np.int64)
    need = np.zeros((len(all_counts), max(nc, 1)), dtype=np.int64)
    for counts in all_counts:
        c = code_of(counts)
        for k in range(nk):
            new = oracle.add(counts, k)
            if new is not None:
                trans[c, k] = code_of(new)
        for ci in range(nc):
            need[c, ci] = max(0, oracle.lo[ci] - counts[ci])
    class_has = np.zeros((nk, max(nc, 1)), dtype=np.int64)
    for k, m in enumerate(oracle.classes):
        class_has[k, :nc] = m

    urns = np.full((P, G), -1, dtype=np.int64)
    sizes = np.zeros(P, dtype=np.int64)
    pot_counts = np.zeros((P, nk), dtype=np.int64)
    for q, pot in enumerate(pot_order):
        teams = [t for t in inst.pots[pot - 1] if t != host]
        urns[q, : len(teams)] = teams
        sizes[q] = len(teams)
        for t in teams:
            pot_counts[q, oracle.team_class[t]] += 1

    desc_bits = max(1, (2 * len(all_counts) - 1).bit_length())
    count_bits = max(1, G.bit_length())
    if desc_bits * G > 63 or 4 + count_bits * nk > 63 or P > 15:
        raise KernelUnsupported("state does not fit two 63-bit words")
    return SkipTables(
        urns,
        sizes,
        np.array([p - 1 for p in pot_order], dtype=np.int64),
        np.array(oracle.team_class, dtype=np.int64),
        pot_counts,
        trans,
        class_has,
        need,
        np.array([ci for ci, lo in enumerate(oracle.lo) if lo > 0], dtype=np.int64),
        desc_bits,
        count_bits,
        -1 if host is None else host,
    )


@dataclass
class _Memo:
    """Completion-search memo in the compiled kernel's open-addressing layout."""

    keys: np.ndarray
    vals: np.ndarray
    fill: np.ndarray

    @classmethod
    def empty(cls, capacity: int = 1 << 20) -> _Memo:
        return cls(
            np.zeros((capacity, 2), dtype=np.int64),
            np.zeros(capacity, dtype=np.int8),
            np.zeros(1, dtype=np.int64),
        )

    def __len__(self) -> int:
        return int(self.fill[0])

    def grow(self) -> None:
        self.keys, self.vals = _kernels.grow_memo(self.keys, self.vals, 2 * self.vals.size)


# One memo per (instance, scenario, policy, pot order), shared by every
# block run in this process; it only caches a pure function.
_MEMOS: dict = {}


def _memo(key) -> _Memo:
    memo = _MEMOS.get(key)
    if memo is None:
        memo = _MEMOS[key] = _Memo.empty()
    return memo


def _scenario_tag(s: ConstraintScenario) -> int:
    k = index_of_scenario(s)
    if k is not None:
        return k
    return 1000 + zlib.crc32(s.describe().encode())


def skip_namespace(s: ConstraintScenario, policy: HostPolicy) -> tuple[int, ...]:
    return (_SKIP_NAMESPACE, _scenario_tag(s), 0 if policy is HostPolicy.PRE_ASSIGN else 1)


@dataclass
class SkipResult:
    accumulator: MatchupAccumulator
    skips: int = 0
    groups: Optional[np.ndarray] = field(default=None, repr=False)


def _skip_job(job) -> SkipResult:
    inst, s, policy, pot_order, seed, stream, n, keep = job
    stream = RandomStream(seed, stream, skip_namespace(s, policy))
    try:
        tables = skip_tables(inst, s, policy, pot_order)
    except KernelUnsupported as exc:
        log.info("falling back to the reference Skip sampler: %s", exc)
        return _reference_skip(inst, s, policy, pot_order, stream.generator(), n, keep)
    memo = _memo((inst, s, policy, tuple(pot_order)))
    weights = pair_weight_matrix(inst)
    while True:
        acc = MatchupAccumulator.for_instance(inst)
        out = np.full((min(n, keep), inst.group_count, inst.pot_count), -1, dtype=np.int64)
        status, skips, psi_sum, psi_min, psi_max = _kernels.skip_block(
            stream.generator(), n, *tables.args(), weights, _kernels.FACTORIALS,
            memo.keys, memo.vals, memo.fill, acc.pair_counts, out,
        )
        if status != -2:
            break
        # Rerun the block from its first draw with a larger memo.
        memo.grow()
    if status == -1:
        raise LookaheadExhausted(f"Skip kernel found no group on {inst.name} under {s.describe()}")
    acc.draw_count = n
    acc.psi_sum, acc.psi_min, acc.psi_max = psi_sum, psi_min, psi_max
    return SkipResult(acc, skips, out if keep else None)


def _reference_skip(inst, s, policy, pot_order, rng, n, keep) -> SkipResult:
    acc = MatchupAccumulator.for_instance(inst)
    kept = []
    for d in range(n):
        a = skip_draw(inst, s, policy, pot_order, rng)
        acc.record(a, inst)
        if d < keep:
            kept.append(a.groups)
    return SkipResult(acc, 0, np.array(kept, dtype=np.int64) if keep else None)


def simulate_skip(
    inst: DrawInstance,
    s: ConstraintScenario,
    iterations: int,
    seed: int = 0,
    policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL,
    pot_order: Optional[Sequence[int]] = None,
    workers: int = 1,
    block_size: int = SKIP_BLOCK,
    keep: int = 0,
) -> SkipResult:
    """``iterations`` Skip draws reduced to one accumulator.

    The first ``keep`` draws of every block are also returned as
    ``groups[d, g, pot]`` arrays (before any relabelling). The skip count
    is only tracked by the compiled kernel.
    """
    pot_order = tuple(pot_order or default_pot_order(inst))
    policy = HostPolicy.parse(policy)
    oracle = feasibility_oracle(inst, s)
    start = GroupAssignment.empty(inst)
    if policy is HostPolicy.PRE_ASSIGN and inst.host is not None:
        start = start.place(inst.host, 0, inst.teams[inst.host].pot)
    if not oracle.completion_exists(start):
        raise InfeasibleScenario(f"no valid assignment for {inst.name} under {s.describe()}")
    jobs = [
        (inst, s, policy, pot_order, seed, b, n, keep)
        for b, n in _blocks(iterations, block_size)
    ]
    parts = _map(_skip_job, jobs, workers)
    acc = parts[0].accumulator
    skips = parts[0].skips
    for part in parts[1:]:
        acc = acc.merge(part.accumulator)
        skips += part.skips
    groups = None
    if keep:
        groups = np.concatenate([p.groups for p in parts])
    return SkipResult(acc, skips, groups)


def simulate_until_accepted(
    inst: DrawInstance,
    target: int,
    scenarios: Sequence[int],
    seed: int = 0,
    workers: int = 1,
    block_size: int = UNIFORM_BLOCK,
    max_draws: Optional[int] = None,
) -> RejectionResult:
    """Unconstrained draws until every scenario in ``scenarios`` has ``target`` accepted draws.

    Blocks are consumed in index order and the run stops after the first
    block that reaches the target, so the result does not depend on
    ``workers``. ``max_draws`` caps the total and raises if reached first.
    """
    if target < 1:
        raise ValueError("target must be at least 1")
    _check_pots(inst)
    scenarios = list(scenarios)
    out: Optional[RejectionResult] = None
    block = 0
    wave = max(1, workers)
    while True:
        jobs = [(inst, seed, block + i, block_size, CANONICAL_BOUNDS) for i in range(wave)]
        for part in _map(_uniform_job, jobs, workers):
            out = part if out is None else out.merge(part)
            block += 1
            if min(out.accepted(k) for k in scenarios) >= target:
                return out
            if max_draws is not None and out.draws >= max_draws:
                raise RuntimeError(
                    f"{out.draws} draws gave fewer than {target} accepted draws for some scenario"
                )
