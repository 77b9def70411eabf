"""Command line: validate, graph, replay, serve.

Exit status is 0 on success, 1 when validation, replay or startup fails,
and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .automaton import compose, to_dot
from .errors import ProtomonError, SpecError
from .library.catalog import resolve_spec
from .library.scenario import Scenario, builtin_scenarios, load_scenario, run_scenario
from .spec import validate_spec

GROUPS = {"@benign": "benign", "@attacks": "attack", "@extras": "extra", "@all": None}


def _load_specs(refs: Sequence[str], out) -> Optional[list]:
    specs = []
    for ref in refs:
        try:
            specs.append(resolve_spec(ref))
        except SpecError as exc:
            print(f"{ref}: error: {exc}", file=out)
            return None
    return specs


def cmd_validate(args) -> int:
    failed = False
    specs = []
    for ref in args.specs:
        try:
            spec = resolve_spec(ref)
        except SpecError as exc:
            print(f"{ref}: error: {exc}")
            failed = True
            continue
        diags = validate_spec(spec)
        for d in diags:
            loc = f" at {d.location}" if d.location else ""
            print(f"{ref}: {d.severity} [{d.code}]{loc}: {d.message}")
        if any(d.severity == "error" for d in diags):
            failed = True
        else:
            specs.append(spec)
            print(f"{ref}: ok ({spec.name}, {len(spec.messages())} messages)")
    if not failed and len(specs) > 1:
        try:
            compose(specs)
        except ProtomonError as exc:
            print(f"composition: error: {exc}")
            failed = True
    return 1 if failed else 0


def cmd_graph(args) -> int:
    specs = _load_specs(args.specs, sys.stderr)
    if specs is None:
        return 1
    try:
        dot = to_dot(compose(specs))
    except ProtomonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.output and args.output != "-":
        Path(args.output).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return 0


def _scenarios(refs: Sequence[str]) -> List[Scenario]:
    out: List[Scenario] = []
    bundled = None
    for ref in refs:
        if ref in GROUPS:
            bundled = bundled or builtin_scenarios()
            out += [s for s in bundled.values() if GROUPS[ref] in (None, s.kind)]
        elif Path(ref).is_file():
            out.append(load_scenario(ref))
        else:
            bundled = bundled or builtin_scenarios()
            name = ref[:-9] if ref.endswith(".scenario") else ref
            if name not in bundled:
                raise ProtomonError(f"no scenario file or bundled scenario named {ref!r}")
            out.append(bundled[name])
    return out


def cmd_replay(args) -> int:
    try:
        scenarios = _scenarios(args.scenarios)
    except ProtomonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    passed = 0
    for sc in scenarios:
        try:
            report = run_scenario(sc, seed=args.seed)
        except ProtomonError as exc:
            print(f"scenario {sc.name}: ERROR {exc}")
            continue
        passed += report.passed
        print(report.render() if not args.quiet else
              f"scenario {sc.name}: {'PASS' if report.passed else 'FAIL'}")
    print(f"{passed}/{len(scenarios)} scenarios passed")
    return 0 if passed == len(scenarios) else 1


def cmd_serve(args) -> int:
    from .proxy import load_config, serve

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        config = load_config(args.config)
        serve(config)
    except (ProtomonError, OSError) as exc:
        print(f"serve: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="protomon", description="Browser-side protocol monitor.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse specs and print diagnostics")
    p.add_argument("specs", nargs="+", help="spec files or bundled spec names")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("graph", help="export the composed automaton as DOT")
    p.add_argument("specs", nargs="+")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("replay", help="replay scenarios against the monitor")
    p.add_argument("scenarios", nargs="+",
                   help="scenario files, bundled names, or @benign/@attacks/@extras/@all")
    p.add_argument("--seed", type=int, default=0, help="placeholder RNG seed")
    p.add_argument("-q", "--quiet", action="store_true", help="one line per scenario")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("serve", help="run the intercepting proxy")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(fn=cmd_serve)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
