"""Experiment orchestration: scenario sweeps, host-policy comparison, frontier, Example 1 checks."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import exactprob, frontier
from .constraints import pair_support
from .metrics import (
    ScenarioMetrics,
    max_abs_bias,
    mean_abs_bias,
    team_mean_abs_bias,
    write_pair_bias_report,
)
from .model import (
    CANONICAL_CONSTRAINTS,
    FULL_SCENARIO,
    SCENARIO_COUNT,
    DrawInstance,
    active_constraint_count,
    constraint_bit,
    load_instance,
    scenario_from_index,
    scenario_letters,
)
from .samplers import HostPolicy, InfeasibleScenario, default_pot_order
from .simulation import RejectionResult, simulate_skip, simulate_unconstrained, simulate_until_accepted

log = logging.getLogger(__name__)

EXPERIMENTS = ("scenario-sweep", "host-policy", "frontier", "example1-verify")
PSI_MECHANISMS = ("uniform", "skip")

_E_BIT = constraint_bit(len(CANONICAL_CONSTRAINTS) - 1)


def skip_known_uniform(k: int) -> bool:
    """Scenarios on which the Skip mechanism is uniform: none or a single pair-prohibiting constraint."""
    return k == 0 or (active_constraint_count(k) == 1 and not k & _E_BIT)


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str = "wc2018"
    experiment: str = "scenario-sweep"
    scenarios: tuple[int, ...] = tuple(range(SCENARIO_COUNT))
    iterations: int = 1_000_000
    seed: int = 20251015
    workers: int = 1
    pot_order: Optional[tuple[int, ...]] = None
    host_policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL
    psi_mechanism: str = "uniform"
    alpha_step: float = 0.001
    out: Path = Path("results")
    metrics: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not 0.0 < self.alpha_step <= 1.0:
            raise ValueError("alpha step must lie in (0, 1]")
        if self.psi_mechanism not in PSI_MECHANISMS:
            raise ValueError(f"psi mechanism must be one of {PSI_MECHANISMS}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        bad = [k for k in self.scenarios if not 0 <= k < SCENARIO_COUNT]
        if bad or not self.scenarios:
            raise ValueError(f"scenario indices must lie in 0..{SCENARIO_COUNT - 1}")
        object.__setattr__(self, "host_policy", HostPolicy.parse(self.host_policy))
        object.__setattr__(self, "out", Path(self.out))


# --- scenario metrics ----------------------------------------------------------------------


def uniform_sample(inst: DrawInstance, scenarios: Sequence[int], iterations: int, seed: int, workers: int = 1) -> RejectionResult:
    """Unconstrained draws until the scenario accepted least often has ``iterations`` draws."""
    return simulate_until_accepted(inst, iterations, scenarios, seed=seed, workers=workers)


def scenario_metrics(
    inst: DrawInstance,
    k: int,
    uniform: RejectionResult,
    iterations: int,
    seed: int,
    policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL,
    pot_order: Optional[Sequence[int]] = None,
    workers: int = 1,
    psi_mechanism: str = "uniform",
) -> tuple[ScenarioMetrics, np.ndarray, np.ndarray]:
    """Metrics of scenario ``k`` plus the uniform and Skip matchup matrices."""
    s = scenario_from_index(k)
    acc_u = uniform.for_scenario(k)
    skip = simulate_skip(inst, s, iterations, seed, policy, pot_order, workers)
    acc_s = skip.accumulator
    p_u, p_s = acc_u.matchup_matrix(), acc_s.matchup_matrix()
    support = pair_support(inst, s)
    m = ScenarioMetrics(
        scenario=k,
        delta=mean_abs_bias(p_u, p_s, support),
        omega=max_abs_bias(p_u, p_s, support),
        psi=acc_u.psi() if psi_mechanism == "uniform" else acc_s.psi(),
        validity=uniform.validity(k),
        psi_uniform=acc_u.psi(),
        psi_skip=acc_s.psi(),
        n_unconstrained=uniform.draws,
        n_uniform=acc_u.draw_count,
        n_skip=acc_s.draw_count,
        support_size=len(support),
        skip_uniform=skip_known_uniform(k),
        skips=skip.skips,
    )
    return m, p_u, p_s


def scenario_sweep(
    inst: DrawInstance,
    scenarios: Sequence[int],
    iterations: int,
    seed: int,
    policy: HostPolicy = HostPolicy.DRAW_AND_RELABEL,
    pot_order: Optional[Sequence[int]] = None,
    workers: int = 1,
    psi_mechanism: str = "uniform",
) -> list[ScenarioMetrics]:
    uniform = uniform_sample(inst, scenarios, iterations, seed, workers)
    out = []
    for k in scenarios:
        try:
            m, _, _ = scenario_metrics(inst, k, uniform, iterations, seed, policy, pot_order, workers, psi_mechanism)
        except InfeasibleScenario as exc:
            log.warning("scenario %d skipped: %s", k, exc)
            continue
        log.info("scenario %2d %-5s delta %.4f omega %.4f psi %.4f", k, scenario_letters(k), m.delta, m.omega, m.psi)
        out.append(m)
    return out


METRIC_COLUMNS = (
    "scenario", "constraints", "validity", "psi", "psi_uniform", "psi_skip", "delta", "omega",
    "n_unconstrained", "n_uniform", "n_skip", "support_size", "skip_uniform", "skips",
)


def write_metrics(path: Union[str, Path], table: Sequence[ScenarioMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in table:
            w.writerow(
                [
                    m.scenario, scenario_letters(m.scenario), f"{m.validity:.6f}", f"{m.psi:.6f}",
                    f"{m.psi_uniform:.6f}", f"{m.psi_skip:.6f}", f"{m.delta:.6f}", f"{m.omega:.6f}",
                    m.n_unconstrained, m.n_uniform, m.n_skip, m.support_size, int(m.skip_uniform), m.skips,
                ]
            )


def read_metrics(path: Union[str, Path]) -> list[ScenarioMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                ScenarioMetrics(
                    scenario=int(row["scenario"]),
                    delta=float(row["delta"]),
                    omega=float(row["omega"]),
                    psi=float(row["psi"]),
                    validity=float(row["validity"]),
                    psi_uniform=float(row.get("psi_uniform", "nan")),
                    psi_skip=float(row.get("psi_skip", "nan")),
                    n_unconstrained=int(row.get("n_unconstrained", 0)),
                    n_uniform=int(row.get("n_uniform", 0)),
                    n_skip=int(row.get("n_skip", 0)),
                    support_size=int(row.get("support_size", 0)),
                    skip_uniform=bool(int(row.get("skip_uniform", 0))),
                    skips=int(row.get("skips", 0)),
                )
            )
    return out


# --- host policy ---------------------------------------------------------------------------


@dataclass
class HostPolicyComparison:
    scenario: int
    p_uniform: np.ndarray
    p_skip: dict[HostPolicy, np.ndarray]
    support: set
    metrics: dict[HostPolicy, ScenarioMetrics] = field(default_factory=dict)

    def team_bias(self, policy: HostPolicy) -> list[tuple[float, int]]:
        n = self.p_uniform.shape[0]
        return team_mean_abs_bias(self.p_uniform, self.p_skip[policy], self.support, n)

    def pair_bias_pp(self, policy: HostPolicy, i: int, j: int) -> float:
        """Skip minus uniform matchup probability, in percentage points."""
        return 100.0 * float(self.p_skip[policy][i, j] - self.p_uniform[i, j])


def host_policy_comparison(
    inst: DrawInstance,
    k: int,
    iterations: int,
    seed: int,
    pot_order: Optional[Sequence[int]] = None,
    workers: int = 1,
    uniform: Optional[RejectionResult] = None,
) -> HostPolicyComparison:
    uniform = uniform or uniform_sample(inst, [k], iterations, seed, workers)
    cmp = None
    for policy in (HostPolicy.PRE_ASSIGN, HostPolicy.DRAW_AND_RELABEL):
        m, p_u, p_s = scenario_metrics(inst, k, uniform, iterations, seed, policy, pot_order, workers)
        if cmp is None:
            cmp = HostPolicyComparison(k, p_u, {}, pair_support(inst, scenario_from_index(k)))
        cmp.p_skip[policy] = p_s
        cmp.metrics[policy] = m
    return cmp


def write_team_bias(path: Union[str, Path], inst: DrawInstance, cmp: HostPolicyComparison) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "team", "pot", "confederation", "mean_abs_bias_pp", "opponents"])
        for policy in (HostPolicy.PRE_ASSIGN, HostPolicy.DRAW_AND_RELABEL):
            for t, (bias, count) in zip(inst.teams, cmp.team_bias(policy)):
                w.writerow([policy.value, t.name, t.pot, "/".join(sorted(t.constraint_confeds)), f"{bias:.6f}", count])


# --- Example 1 -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def example1_checks(iterations: int = 100_000, seed: int = 1, tolerance: float = 0.01) -> list[Check]:
    """Exact and sampled matchup checks on the six-team example."""
    inst = exactprob.example1_instance()
    s = exactprob.EXAMPLE1_SCENARIO
    one, four = inst.index("1"), inst.index("4")
    uni = exactprob.uniform_distribution(inst, s)
    skip = exactprob.exact_skip_distribution(inst, s)
    pu = exactprob.matchup_matrix(inst, uni)
    ps = exactprob.matchup_matrix(inst, skip)
    support = sorted(pair_support(inst, s))
    gaps = [abs(pu[i][j] - ps[i][j]) for i, j in support]
    delta = 100 * sum(gaps, Fraction(0)) / len(gaps)
    omega = 100 * max(gaps)
    comp = exactprob.composition_distribution(skip)
    expected_comp = {
        frozenset({frozenset({0, 2, 5}), frozenset({1, 3, 4})}): Fraction(1, 2),
        frozenset({frozenset({0, 3, 4}), frozenset({1, 2, 5})}): Fraction(1, 4),
        frozenset({frozenset({0, 3, 5}), frozenset({1, 2, 4})}): Fraction(1, 4),
    }
    checks = [
        Check("uniform valid outcomes", len(uni) == 6, f"{len(uni)} labelled outcomes"),
        Check("uniform p(1,4)", pu[one][four] == Fraction(2, 3), f"{pu[one][four]}"),
        Check("skip p(1,4)", ps[one][four] == Fraction(1, 2), f"{ps[one][four]}"),
        Check("skip compositions", comp == expected_comp, ", ".join(str(v) for v in comp.values())),
        Check("mean abs bias", delta == Fraction(100, 9), f"{float(delta):.6f} pp"),
        Check("max abs bias", omega == Fraction(100, 6), f"{float(omega):.6f} pp"),
    ]
    if iterations:
        unc = simulate_unconstrained(inst, iterations, seed, constraints=[("X", 0, 2)], block_size=iterations)
        acc_u = unc.for_scenario(1)
        acc_s = simulate_skip(inst, s, iterations, seed, block_size=iterations).accumulator
        est_u = acc_u.matchup_matrix()[one, four]
        est_s = acc_s.matchup_matrix()[one, four]
        checks += [
            Check("sampled uniform p(1,4)", abs(est_u - 2 / 3) <= tolerance, f"{est_u:.6f} over {acc_u.draw_count} draws"),
            Check("sampled skip p(1,4)", abs(est_s - 0.5) <= tolerance, f"{est_s:.6f} over {acc_s.draw_count} draws"),
        ]
    return checks


# --- driver ----------------------------------------------------------------------------------


def run(config: ExperimentConfig) -> int:
    """Run one experiment; returns a process exit status."""
    config.out.mkdir(parents=True, exist_ok=True)
    if config.experiment == "example1-verify":
        checks = example1_checks(config.iterations, config.seed)
        lines = [c.line() for c in checks]
        (config.out / "example1.txt").write_text("\n".join(lines) + "\n")
        for line in lines:
            print(line)
        return 0 if all(c.passed for c in checks) else 1

    inst = load_instance(config.instance)
    pot_order = config.pot_order or default_pot_order(inst)
    stem = inst.name or Path(config.instance).stem
    started = time.perf_counter()

    if config.experiment == "scenario-sweep":
        table = scenario_sweep(
            inst, config.scenarios, config.iterations, config.seed, config.host_policy,
            pot_order, config.workers, config.psi_mechanism,
        )
        write_metrics(config.out / f"{stem}_metrics.csv", table)

    elif config.experiment == "host-policy":
        k = config.scenarios[0] if len(config.scenarios) == 1 else FULL_SCENARIO
        cmp = host_policy_comparison(inst, k, config.iterations, config.seed, pot_order, config.workers)
        write_team_bias(config.out / f"{stem}_team_bias.csv", inst, cmp)
        for policy in (HostPolicy.PRE_ASSIGN, HostPolicy.DRAW_AND_RELABEL):
            write_pair_bias_report(
                config.out / f"{stem}_pair_bias_{policy.value}.csv", inst, cmp.p_uniform,
                cmp.p_skip[policy], cmp.support, {"policy": policy.value},
            )
        write_metrics(config.out / f"{stem}_host_policy_metrics.csv", list(cmp.metrics.values()))

    elif config.experiment == "frontier":
        if config.metrics is not None:
            table = read_metrics(config.metrics)
            if config.psi_mechanism == "skip":
                table = [replace(m, psi=m.psi_skip) for m in table]
        else:
            table = scenario_sweep(
                inst, config.scenarios, config.iterations, config.seed, config.host_policy,
                pot_order, config.workers, config.psi_mechanism,
            )
            write_metrics(config.out / f"{stem}_metrics.csv", table)
        kinds = (frontier.ObjectiveKind.OPT1, frontier.ObjectiveKind.OPT2)
        frontier.write_frontier_report(
            config.out / f"{stem}_frontier.csv", [(k, frontier.breakpoints(k, table)) for k in kinds]
        )
        frontier.write_envelope_report(
            config.out / f"{stem}_envelope.csv",
            [(k, frontier.envelope(k, table, config.alpha_step)) for k in kinds],
        )

    log.info("%s on %s finished in %.1f s", config.experiment, stem, time.perf_counter() - started)
    return 0
