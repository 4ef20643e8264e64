"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .experiments import EXPERIMENTS, PSI_MECHANISMS, ExperimentConfig, run
from .model import SCENARIO_COUNT
from .samplers import HostPolicy


def _scenarios(text: str) -> tuple[int, ...]:
    if text.strip().lower() == "all":
        return tuple(range(SCENARIO_COUNT))
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _pot_order(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="groupdraw",
        description="Fairness and attractiveness of constrained group draws.",
    )
    p.add_argument("--instance", default="wc2018", help="bundled instance name or path to a JSON instance")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="scenario-sweep")
    p.add_argument("--scenarios", type=_scenarios, default=tuple(range(SCENARIO_COUNT)),
                   help="comma-separated indices or ranges (e.g. 0,2,28-31), or 'all'")
    p.add_argument("--iterations", type=int, default=1_000_000,
                   help="Skip draws per scenario and accepted uniform draws for the rarest scenario")
    p.add_argument("--seed", type=int, default=20251015)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--host-policy", type=HostPolicy.parse, default=HostPolicy.DRAW_AND_RELABEL,
                   help="pre-assign or relabel")
    p.add_argument("--pot-order", type=_pot_order, default=None, help="e.g. 1,2,3,4")
    p.add_argument("--psi-mechanism", choices=PSI_MECHANISMS, default="uniform")
    p.add_argument("--alpha-step", type=float, default=0.001)
    p.add_argument("--metrics", type=Path, default=None,
                   help="frontier only: read scenario metrics from this CSV instead of simulating")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        config = ExperimentConfig(
            instance=args.instance,
            experiment=args.experiment,
            scenarios=args.scenarios,
            iterations=args.iterations,
            seed=args.seed,
            workers=args.workers,
            pot_order=args.pot_order,
            host_policy=args.host_policy,
            psi_mechanism=args.psi_mechanism,
            alpha_step=args.alpha_step,
            out=args.out,
            metrics=args.metrics,
        )
        return run(config)
    except (ValueError, OSError) as exc:
        print(f"groupdraw: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
