#!/usr/bin/env python3
"""Per-message engine overhead with N composed specs.

    python3 scripts/bench.py [--specs 4] [--rounds 500]
"""
from __future__ import annotations

import argparse
import random
import statistics
import time
from dataclasses import dataclass

from protomon.automaton import compose
from protomon.engine import MonitorContext
from protomon.library import DEFAULT_ORDER, builtin_scenarios, builtin_spec


@dataclass
class BenchConfig:
    specs: int = 4
    rounds: int = 500
    scenario: str = "benign-google-explicit-state"
    seed: int = 0


def run(cfg: BenchConfig) -> dict:
    auto = compose([builtin_spec(n) for n in DEFAULT_ORDER[:cfg.specs]])
    events = [s.event for s in builtin_scenarios("benign")[cfg.scenario].steps]
    ctx = MonitorContext(auto, token_source=random.Random(cfg.seed).randbytes)
    samples = []
    for _ in range(cfg.rounds):
        ctx.reset()
        for ev in events:
            t0 = time.perf_counter()
            ctx.on_event(ev)
            samples.append(time.perf_counter() - t0)
    samples.sort()
    return {
        "specs": cfg.specs,
        "messages": len(samples),
        "median_ms": statistics.median(samples) * 1000,
        "p99_ms": samples[int(len(samples) * 0.99)] * 1000,
    }


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--specs", type=int, nargs="+", default=[1, 4, 13])
    ap.add_argument("--rounds", type=int, default=500)
    a = ap.parse_args()
    for n in a.specs:
        r = run(BenchConfig(specs=n, rounds=a.rounds))
        print(f"{r['specs']:>3} specs  {r['messages']:>6} msgs  median {r['median_ms']:.3f} ms  p99 {r['p99_ms']:.3f} ms")
