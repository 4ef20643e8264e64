"""Matchup accumulation, bias measures and the intra-confederation match count."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .model import DrawInstance, GroupAssignment

Pair = tuple[int, int]


def win_expectancy(r_i: float, r_j: float) -> float:
    """World Football Elo win expectancy of a team rated ``r_i`` against ``r_j``."""
    return 1.0 / (1.0 + 10.0 ** (-(r_i - r_j) / 400.0))


# --- play-off placeholders ----------------------------------------------------


@dataclass(frozen=True)
class Entrant:
    name: str
    confederation: str
    elo: float


Bracket = Union[Entrant, Mapping, Sequence]


def _as_node(node: Bracket):
    if isinstance(node, Entrant):
        return node
    if isinstance(node, Mapping):
        try:
            return Entrant(node["name"], node["confederation"], float(node["elo"]))
        except KeyError as exc:
            raise ValueError(f"malformed bracket entrant {dict(node)!r}") from exc
    if isinstance(node, (list, tuple)):
        if len(node) != 2:
            raise ValueError("a bracket match needs exactly two sides")
        return (_as_node(node[0]), _as_node(node[1]))
    raise ValueError(f"malformed bracket node {node!r}")


def _winner_probabilities(node) -> dict[Entrant, float]:
    if isinstance(node, Entrant):
        return {node: 1.0}
    left, right = (_winner_probabilities(side) for side in node)
    out: dict[Entrant, float] = {}
    for side, other in ((left, right), (right, left)):
        for a, pa in side.items():
            out[a] = pa * sum(pb * win_expectancy(a.elo, b.elo) for b, pb in other.items())
    return out


def bracket_winner_probabilities(bracket: Bracket) -> dict[str, float]:
    """Probability that each entrant wins a single-elimination bracket."""
    return {e.name: p for e, p in _winner_probabilities(_as_node(bracket)).items()}


def placeholder_distribution(bracket: Bracket) -> dict[str, float]:
    """Confederation of the bracket winner, propagating Elo win expectancies.

    A bracket is an entrant (mapping with ``name``, ``confederation``,
    ``elo``) or a two-element list of sub-brackets.
    """
    out: dict[str, float] = {}
    for e, p in _winner_probabilities(_as_node(bracket)).items():
        out[e.confederation] = out.get(e.confederation, 0.0) + p
    return dict(sorted(out.items()))


# --- intra-confederation weight -----------------------------------------------


def pair_weight_matrix(inst: DrawInstance) -> np.ndarray:
    """Expected same-confederation indicator for every team pair."""
    codes = inst.confederations
    dist = np.array(
        [[t.confed_distribution.get(c, 0.0) for c in codes] for t in inst.teams], dtype=float
    )
    w = dist @ dist.T
    np.fill_diagonal(w, 0.0)
    return w


def intra_confed_weight(a: GroupAssignment, inst: DrawInstance) -> float:
    """Expected number of same-confederation group matches in ``a``."""
    if not a.complete:
        raise ValueError("intra_confed_weight needs a complete assignment")
    total = 0.0
    for i, j in a.pairs():
        di, dj = inst.teams[i].confed_distribution, inst.teams[j].confed_distribution
        total += sum(p * dj.get(c, 0.0) for c, p in di.items())
    return total


# --- accumulation --------------------------------------------------------------


@dataclass
class MatchupAccumulator:
    """Same-group pair counts and the running sum of the intra-confederation weight."""

    team_count: int
    pair_counts: np.ndarray = None
    draw_count: int = 0
    psi_sum: float = 0.0
    psi_min: float = float("inf")
    psi_max: float = float("-inf")
    instance_name: str = ""

    def __post_init__(self) -> None:
        if self.pair_counts is None:
            self.pair_counts = np.zeros((self.team_count, self.team_count), dtype=np.int64)

    @classmethod
    def for_instance(cls, inst: DrawInstance) -> MatchupAccumulator:
        return cls(inst.team_count, instance_name=inst.name)

    def record(self, a: GroupAssignment, inst: DrawInstance) -> MatchupAccumulator:
        if not a.complete:
            raise ValueError("only complete assignments can be recorded")
        for i, j in a.pairs():
            self.pair_counts[i, j] += 1
            self.pair_counts[j, i] += 1
        w = intra_confed_weight(a, inst)
        self.draw_count += 1
        self.psi_sum += w
        self.psi_min = min(self.psi_min, w)
        self.psi_max = max(self.psi_max, w)
        return self

    def merge(self, other: MatchupAccumulator) -> MatchupAccumulator:
        return merge(self, other)

    def matchup_matrix(self) -> np.ndarray:
        if self.draw_count == 0:
            raise ValueError("no draws recorded")
        return self.pair_counts / self.draw_count

    def psi(self) -> float:
        return psi(self)


def record(acc: MatchupAccumulator, a: GroupAssignment, inst: DrawInstance) -> MatchupAccumulator:
    return acc.record(a, inst)


def merge(x: MatchupAccumulator, y: MatchupAccumulator) -> MatchupAccumulator:
    if x.team_count != y.team_count or (
        x.instance_name and y.instance_name and x.instance_name != y.instance_name
    ):
        raise ValueError("cannot merge accumulators of different instances")
    return MatchupAccumulator(
        x.team_count,
        x.pair_counts + y.pair_counts,
        x.draw_count + y.draw_count,
        x.psi_sum + y.psi_sum,
        min(x.psi_min, y.psi_min),
        max(x.psi_max, y.psi_max),
        x.instance_name or y.instance_name,
    )


def psi(acc: MatchupAccumulator) -> float:
    if acc.draw_count == 0:
        raise ValueError("psi of an empty accumulator")
    return acc.psi_sum / acc.draw_count


# --- bias measures ---------------------------------------------------------------


def _gaps(p_uniform: np.ndarray, p_skip: np.ndarray, support: Iterable[Pair]) -> np.ndarray:
    pairs = list(support)
    if not pairs:
        raise ValueError("empty support")
    i, j = np.array(pairs).T
    return np.abs(np.asarray(p_uniform)[i, j] - np.asarray(p_skip)[i, j])


def mean_abs_bias(p_uniform: np.ndarray, p_skip: np.ndarray, support: Iterable[Pair]) -> float:
    """Mean absolute matchup-probability gap over ``support``, in percentage points."""
    return 100.0 * float(_gaps(p_uniform, p_skip, support).mean())


def max_abs_bias(p_uniform: np.ndarray, p_skip: np.ndarray, support: Iterable[Pair]) -> float:
    """Largest absolute matchup-probability gap over ``support``, in percentage points."""
    return 100.0 * float(_gaps(p_uniform, p_skip, support).max())


def team_mean_abs_bias(
    p_uniform: np.ndarray, p_skip: np.ndarray, support: Iterable[Pair], team_count: int
) -> list[tuple[float, int]]:
    """Per team: (mean absolute gap over its possible opponents in pp, opponent count)."""
    total = np.zeros(team_count)
    count = np.zeros(team_count, dtype=int)
    for i, j in support:
        gap = abs(p_uniform[i, j] - p_skip[i, j])
        total[i] += gap
        total[j] += gap
        count[i] += 1
        count[j] += 1
    return [
        (100.0 * total[t] / count[t] if count[t] else 0.0, int(count[t])) for t in range(team_count)
    ]


@dataclass
class ScenarioMetrics:
    """Fairness and attractiveness figures of one constraint scenario."""

    scenario: int
    delta: float
    omega: float
    psi: float
    validity: float
    psi_uniform: float = float("nan")
    psi_skip: float = float("nan")
    n_unconstrained: int = 0
    n_uniform: int = 0
    n_skip: int = 0
    support_size: int = 0
    skip_uniform: bool = False
    skips: int = 0

    def nonuniformity(self, measure: str, zero_known_uniform: bool = True) -> float:
        """``delta`` or ``omega``; zero when the Skip mechanism is known to be uniform."""
        if zero_known_uniform and self.skip_uniform:
            return 0.0
        return self.delta if measure == "delta" else self.omega


def write_pair_bias_report(
    path: Union[str, Path],
    inst: DrawInstance,
    p_uniform: np.ndarray,
    p_skip: np.ndarray,
    support: Iterable[Pair],
    extra: Optional[Mapping[str, str]] = None,
) -> None:
    """Delimited per-pair report with columns team_i, team_j, pU, pS, bias_pp."""
    extra = dict(extra or {})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*extra, "team_i", "team_j", "pU", "pS", "bias_pp"])
        for i, j in sorted(support):
            w.writerow(
                [
                    *extra.values(),
                    inst.teams[i].name,
                    inst.teams[j].name,
                    f"{p_uniform[i, j]:.6f}",
                    f"{p_skip[i, j]:.6f}",
                    f"{100.0 * (p_skip[i, j] - p_uniform[i, j]):.6f}",
                ]
            )
