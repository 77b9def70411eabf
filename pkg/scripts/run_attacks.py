#!/usr/bin/env python3
"""Replay the bundled attack and benign suites and print one row per scenario.

    python3 scripts/run_attacks.py [--seed 7] [--verbose]
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

from protomon.library import builtin_scenarios, run_scenario


@dataclass
class SuiteConfig:
    seed: int = 7
    kinds: tuple = ("attack", "benign", "extra")
    verbose: bool = False


def outcome(rep) -> str:
    if rep.first_failure is None:
        return "-"
    r = rep.results[rep.first_failure]
    return f"{r.verdict.reason or r.expect_reason} @ step {r.index}"


def main(cfg: SuiteConfig) -> int:
    failed = 0
    for kind in cfg.kinds:
        scenarios = builtin_scenarios(kind)
        t0 = time.perf_counter()
        reports = [run_scenario(sc, seed=cfg.seed) for sc in scenarios.values()]
        elapsed = time.perf_counter() - t0
        print(f"\n{kind} ({len(reports)} scenarios, {elapsed * 1000:.1f} ms)")
        for rep in reports:
            sc = rep.scenario
            print(f"  {'PASS' if rep.passed else 'FAIL'}  {sc.name:<34} {sc.attack_class or '':<10} {outcome(rep)}")
            if cfg.verbose or not rep.passed:
                print(rep.render())
            failed += not rep.passed
    return 1 if failed else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("-v", "--verbose", action="store_true")
    a = ap.parse_args()
    sys.exit(main(SuiteConfig(seed=a.seed, verbose=a.verbose)))
