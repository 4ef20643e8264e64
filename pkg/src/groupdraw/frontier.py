"""Weighted trade-off between non-uniformity and intra-confederation matches.

Every scenario's objective is a line in the weight ``alpha``:
``alpha * u + (1 - alpha) * psi`` with ``u = 10 * delta`` (Opt1) or
``u = omega`` (Opt2). The optimal scenarios over ``alpha`` in [0, 1] form
the lower envelope of these lines, computed here from exact intersections.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .metrics import ScenarioMetrics
from .model import active_constraint_count, scenario_letters

log = logging.getLogger(__name__)

DELTA_MULTIPLIER = 10.0
DEGENERATE_WIDTH = 1e-9


class ObjectiveKind(enum.Enum):
    OPT1 = "opt1"
    OPT2 = "opt2"

    @classmethod
    def parse(cls, value) -> ObjectiveKind:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown objective {value!r}") from None


@dataclass(frozen=True)
class TradeoffWeight:
    """Priority ``alpha`` of uniformity over attractiveness."""

    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Interval:
    alpha_low: float
    alpha_high: float
    scenario: int


def nonuniformity(kind: ObjectiveKind, m: ScenarioMetrics, zero_known_uniform: bool = True) -> float:
    kind = ObjectiveKind.parse(kind)
    if kind is ObjectiveKind.OPT1:
        return DELTA_MULTIPLIER * m.nonuniformity("delta", zero_known_uniform)
    return m.nonuniformity("omega", zero_known_uniform)


def _line(kind, m: ScenarioMetrics, zero_known_uniform: bool) -> tuple[float, float]:
    """(intercept, slope) of the objective as a function of alpha."""
    u = nonuniformity(kind, m, zero_known_uniform)
    return m.psi, u - m.psi


def objective_value(
    kind, m: ScenarioMetrics, w: Union[TradeoffWeight, float], zero_known_uniform: bool = True
) -> float:
    alpha = w.alpha if isinstance(w, TradeoffWeight) else TradeoffWeight(float(w)).alpha
    u = nonuniformity(kind, m, zero_known_uniform)
    return alpha * u + (1.0 - alpha) * m.psi


def _preference(m: ScenarioMetrics) -> tuple[int, int]:
    # Among equal objectives: more active constraints first, then the lower index.
    return -active_constraint_count(m.scenario), m.scenario


def optimal_scenario(
    kind, table: Sequence[ScenarioMetrics], w: Union[TradeoffWeight, float], zero_known_uniform: bool = True
) -> int:
    """Scenario minimising the objective at ``w``; ties go to more constraints, then lower index."""
    if not table:
        raise ValueError("empty metrics table")
    best = min(table, key=lambda m: (objective_value(kind, m, w, zero_known_uniform), _preference(m)))
    return best.scenario


def _right_argmin(lines, alpha: float):
    """Index of the line that is minimal just to the right of ``alpha``."""
    return min(
        range(len(lines)),
        key=lambda i: (lines[i][0] + alpha * lines[i][1], lines[i][1], lines[i][2]),
    )


def breakpoints(
    kind, table: Sequence[ScenarioMetrics], zero_known_uniform: bool = True
) -> list[Interval]:
    """Maximal alpha intervals of [0, 1] with a constant optimal scenario."""
    if not table:
        raise ValueError("empty metrics table")
    lines = [(*_line(kind, m, zero_known_uniform), _preference(m), m.scenario) for m in table]
    out: list[Interval] = []
    lo = 0.0
    cur = _right_argmin(lines, lo)
    # Each step moves to a line of strictly smaller slope, so this terminates.
    while True:
        b0, s0 = lines[cur][0], lines[cur][1]
        nxt, cross = None, 1.0
        for j, (b, s, pref, _) in enumerate(lines):
            if s >= s0:
                continue
            a = max(lo, (b - b0) / (s0 - s))
            if nxt is None or (a, s, pref) < (cross, lines[nxt][1], lines[nxt][2]):
                nxt, cross = j, a
        if nxt is None or cross >= 1.0:
            out.append(Interval(lo, 1.0, lines[cur][3]))
            break
        out.append(Interval(lo, cross, lines[cur][3]))
        lo, cur = cross, nxt
    return _drop_degenerate(out)


def _drop_degenerate(intervals: list[Interval]) -> list[Interval]:
    kept: list[Interval] = []
    for iv in intervals:
        if iv.alpha_high - iv.alpha_low < DEGENERATE_WIDTH and len(intervals) > 1:
            log.info("dropping scenario %d: optimal only on [%r, %r]", iv.scenario, iv.alpha_low, iv.alpha_high)
            continue
        if kept and kept[-1].scenario == iv.scenario:
            kept[-1] = Interval(kept[-1].alpha_low, iv.alpha_high, iv.scenario)
        elif kept:
            # Close the gap left by a dropped sliver at the shared endpoint.
            kept.append(Interval(kept[-1].alpha_high, iv.alpha_high, iv.scenario))
        else:
            kept.append(Interval(0.0, iv.alpha_high, iv.scenario))
    kept[-1] = Interval(kept[-1].alpha_low, 1.0, kept[-1].scenario)
    return kept


def pareto_front(kind, table: Sequence[ScenarioMetrics], zero_known_uniform: bool = True) -> set[int]:
    """Scenarios optimal for some alpha in [0, 1]."""
    return {iv.scenario for iv in breakpoints(kind, table, zero_known_uniform)}


def alpha_grid(step: float) -> np.ndarray:
    if not 0.0 < step <= 1.0:
        raise ValueError("alpha step must lie in (0, 1]")
    n = int(round(1.0 / step))
    grid = np.arange(n + 1) * step
    if abs(grid[-1] - 1.0) > 1e-12:
        grid = np.append(grid[grid < 1.0], 1.0)
    return np.clip(grid, 0.0, 1.0)


def envelope(
    kind, table: Sequence[ScenarioMetrics], step: float = 0.001, zero_known_uniform: bool = True
) -> list[tuple[float, int, float]]:
    """(alpha, optimal scenario, objective value) on a regular alpha grid."""
    by_index = {m.scenario: m for m in table}
    out = []
    for a in alpha_grid(step):
        s = optimal_scenario(kind, table, float(a), zero_known_uniform)
        out.append((float(a), s, objective_value(kind, by_index[s], float(a), zero_known_uniform)))
    return out


# --- reports -------------------------------------------------------------------------


def write_frontier_report(path: Union[str, Path], results: Iterable[tuple[ObjectiveKind, list[Interval]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "alpha_low", "alpha_high", "scenario", "constraints"])
        for kind, intervals in results:
            for iv in intervals:
                w.writerow(
                    [
                        ObjectiveKind.parse(kind).value,
                        f"{iv.alpha_low:.6f}",
                        f"{iv.alpha_high:.6f}",
                        iv.scenario,
                        scenario_letters(iv.scenario),
                    ]
                )


def write_envelope_report(
    path: Union[str, Path], results: Iterable[tuple[ObjectiveKind, list[tuple[float, int, float]]]]
) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "alpha", "scenario", "value"])
        for kind, rows in results:
            for alpha, s, value in rows:
                w.writerow([ObjectiveKind.parse(kind).value, f"{alpha:.6f}", s, f"{value:.6f}"])
