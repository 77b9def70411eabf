"""Guarded, tree-shaped automata compiled from protocol specifications.

Each message of a flow becomes one edge; the state an edge enters is named
``<spec>#<n>``. Self-loops are implicit: an event that matches no guard
anywhere in the automaton leaves the state unchanged.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from . import regex as rx
from .errors import CompileError
from .http import HttpEvent, HttpRequest, HttpResponse
from .spec import (
    REF_RE,
    REQUEST,
    FieldPattern,
    IdentifierDefinition,
    IntegrityPolicy,
    MessagePattern,
    Pattern,
    ProtocolSpec,
    SecrecyPolicy,
    analyze_scopes,
    validate_spec,
)

INIT = "init"

FLOW_DEVIATION = "flow-deviation"
INTEGRITY_FAILURE = "integrity-failure"


@dataclass(frozen=True)
class Transition:
    source: str
    guard: MessagePattern
    target: str
    bindings_introduced: frozenset
    definitions: Tuple[IdentifierDefinition, ...] = ()
    secrecy: Tuple[SecrecyPolicy, ...] = ()
    integrity: Tuple[IntegrityPolicy, ...] = ()
    origin_spec: str = ""

    @property
    def label(self) -> str:
        return self.guard.desc or self.target


@dataclass(frozen=True)
class Automaton:
    init: str
    states: Tuple[str, ...]
    finals: frozenset
    transitions: Mapping[str, Tuple[Transition, ...]]
    introduced: Mapping[str, frozenset]
    specs: Tuple[str, ...] = ()
    labels: Mapping[str, str] = field(default_factory=dict)

    def outgoing(self, state: str) -> Tuple[Transition, ...]:
        return self.transitions.get(state, ())

    @property
    def all_transitions(self) -> Tuple[Transition, ...]:
        return tuple(t for s in self.states for t in self.outgoing(s))

    def parent(self, state: str) -> Optional[str]:
        for t in self.all_transitions:
            if t.target == state:
                return t.source
        return None

    def root_path(self, state: str) -> List[Transition]:
        """Forward edges from init down to ``state``."""
        into = {t.target: t for t in self.all_transitions}
        path = []
        while state in into:
            path.append(into[state])
            state = into[state].source
        return path[::-1]


def compile_spec(spec: ProtocolSpec) -> Automaton:
    errors = [d for d in validate_spec(spec) if d.severity == "error"]
    if errors:
        raise CompileError(f"{spec.name}: " + "; ".join(str(d) for d in errors))
    info = analyze_scopes(spec)

    def state_of(key: Optional[int]) -> str:
        return INIT if key is None else f"{spec.name}#{key + 1}"

    transitions: Dict[str, List[Transition]] = {}
    introduced: Dict[str, frozenset] = {}
    labels = {INIT: INIT}
    finals = set()
    roots = info.definitions_at.get(None, [])
    for site in info.sites:
        defs = list(info.definitions_at.get(site.key, []))
        if site.parent is None:
            defs = list(roots) + defs
        ids = frozenset(site.message.ids + [d.id for d in defs])
        secrecy = tuple(p for p in spec.secrecy_policies if info.site_of[p.target_id] == site.key)
        integrity = tuple(p for p in spec.integrity_policies if info.site_of[p.target_id] == site.key)
        src, dst = state_of(site.parent), state_of(site.key)
        transitions.setdefault(src, []).append(
            Transition(src, site.message, dst, ids, tuple(defs), secrecy, integrity, spec.name))
        introduced[dst] = ids
        labels[dst] = site.message.desc or dst
        if site.leaf:
            finals.add(dst)
    states = (INIT,) + tuple(state_of(s.key) for s in info.sites)
    return Automaton(
        init=INIT,
        states=states,
        finals=frozenset(finals),
        transitions={k: tuple(v) for k, v in transitions.items()},
        introduced=introduced,
        specs=(spec.name,),
        labels=labels,
    )


# ``compile`` shadows the builtin inside this module's namespace only
compile = compile_spec


def compose(specs: Sequence[ProtocolSpec]) -> Automaton:
    """One automaton whose init fans out to each spec's flow, in order."""
    if not specs:
        raise CompileError("nothing to compose")
    names = [s.name for s in specs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise CompileError(f"duplicate specification names: {dupes}")
    parts = [compile_spec(s) for s in specs]
    states = [INIT]
    transitions: Dict[str, List[Transition]] = {}
    introduced: Dict[str, frozenset] = {}
    labels = {INIT: INIT}
    for a in parts:
        states += [s for s in a.states if s != INIT]
        for src, ts in a.transitions.items():
            transitions.setdefault(src, []).extend(ts)
        introduced.update(a.introduced)
        labels.update(a.labels)
    return Automaton(
        init=INIT,
        states=tuple(states),
        finals=frozenset().union(*(a.finals for a in parts)),
        transitions={k: tuple(v) for k, v in transitions.items()},
        introduced=introduced,
        specs=tuple(names),
        labels=labels,
    )


# -- guard matching -----------------------------------------------------------

class _Unbound(Exception):
    pass


def expand(template: str, env: Mapping[str, str], lenient: bool = False,
           escape: bool = False, wildcard: str = ".*") -> str:
    """Substitute ``${id}`` references; unbound ids raise unless ``lenient``."""

    def sub(m):
        ident = m.group(1)
        if ident in env:
            return re.escape(env[ident]) if escape else env[ident]
        if lenient:
            return wildcard
        raise _Unbound(ident)

    return REF_RE.sub(sub, template)


def _value_matches(pattern: Pattern, value: str, env: Mapping[str, str], lenient: bool) -> bool:
    if pattern.kind == "any":
        return True
    if pattern.kind == "literal":
        if lenient and any(r not in env for r in pattern.refs):
            parts = REF_RE.split(pattern.text)
            # split() alternates literal text and reference names
            regex = "".join(
                (re.escape(env[p]) if p in env else ".*") if i % 2 else re.escape(p)
                for i, p in enumerate(parts))
            return re.fullmatch(regex, value, re.DOTALL) is not None
        return value == expand(pattern.text, env)
    return rx.search(expand(pattern.text, env, lenient, escape=True), value) is not None


def _field_values(f: FieldPattern, event: HttpEvent, is_endpoint: bool, is_param: bool) -> List[str]:
    if is_endpoint:
        url = event.url if isinstance(event, HttpRequest) else event.request_url
        return [url.endpoint]
    if is_param:
        if not isinstance(event, HttpRequest):
            return []
        return [v for k, v in event.params if k == f.name]
    return event.headers.get_all(f.name)


def match_guard(
    guard: MessagePattern,
    event: HttpEvent,
    env: Mapping[str, str],
    definitions: Sequence[IdentifierDefinition] = (),
    lenient: bool = False,
) -> Optional[Dict[str, str]]:
    """Bindings introduced by ``event`` if it matches ``guard``, else None.

    With ``lenient`` set, references to unbound identifiers act as
    wildcards and definitions that need them are skipped; this decides
    whether an event is protocol-shaped at all.
    """
    is_request = isinstance(event, HttpRequest)
    if is_request != (guard.direction == REQUEST):
        return None
    if guard.method and is_request and event.method.upper() != guard.method:
        return None
    local: Dict[str, str] = {}
    scope = dict(env)
    n_params = len(guard.parameters)
    fields = guard.fields
    offset = 1 if guard.endpoint is not None else 0
    try:
        for i, f in enumerate(fields):
            is_endpoint = offset == 1 and i == 0
            is_param = not is_endpoint and i - offset < n_params
            for value in _field_values(f, event, is_endpoint, is_param):
                if _value_matches(f.pattern, value, scope, lenient):
                    if f.id:
                        local[f.id] = scope[f.id] = value
                    break
            else:
                return None
        for d in definitions:
            try:
                source = expand(d.source, scope)
            except _Unbound:
                if lenient:
                    continue
                raise
            m = rx.search(expand(d.regexp, scope, lenient, escape=True), source)
            if m is None:
                return None
            local[d.id] = scope[d.id] = rx.first_group_or_match(m)
    except _Unbound:
        return None
    return local


def check_integrity(policy: IntegrityPolicy, env: Mapping[str, str]) -> bool:
    target = env.get(policy.target_id)
    if target is None:
        return False
    try:
        if policy.matches.kind == "regex":
            return rx.search(expand(policy.matches.text, env, escape=True), target) is not None
        if policy.matches.kind == "any":
            return True
        return target == expand(policy.matches.text, env)
    except _Unbound:
        return False


# -- classification -----------------------------------------------------------

@dataclass(frozen=True)
class Step:
    transition: Transition
    bindings: Mapping[str, str]
    kind: str = "step"


@dataclass(frozen=True)
class Unrelated:
    kind: str = "unrelated"


@dataclass(frozen=True)
class Violation:
    reason: str
    detail: str = ""
    transition: Optional[Transition] = None
    kind: str = "violation"


Classification = Union[Step, Unrelated, Violation]


def is_protocol_shaped(auto: Automaton, event: HttpEvent) -> Optional[Transition]:
    """First guard anywhere in ``auto`` the event could match, if any."""
    for t in auto.all_transitions:
        if match_guard(t.guard, event, {}, t.definitions, lenient=True) is not None:
            return t
    return None


def classify(auto: Automaton, state: str, event: HttpEvent, env: Mapping[str, str]) -> Classification:
    failed: Optional[Transition] = None
    for t in auto.outgoing(state):
        bindings = match_guard(t.guard, event, env, t.definitions)
        if bindings is None:
            continue
        scope = {**env, **bindings}
        bad = [p for p in t.integrity if not check_integrity(p, scope)]
        if not bad:
            return Step(t, bindings)
        if failed is None:
            failed = t
            detail = "; ".join(f"{p.target} != {p.matches.text}" for p in bad)
    if failed is not None:
        return Violation(INTEGRITY_FAILURE, f"{failed.label}: {detail}", failed)
    shaped = is_protocol_shaped(auto, event)
    if shaped is not None:
        return Violation(
            FLOW_DEVIATION,
            f"matches {shaped.origin_spec}:{shaped.label}, not enabled in state {state}",
            shaped,
        )
    return Unrelated()


# -- DOT export -----------------------------------------------------------------

def describe_pattern(p: MessagePattern) -> str:
    def fmt(f: FieldPattern) -> str:
        body = {"any": "*", "literal": f.pattern.text, "regex": f"/{f.pattern.text}/"}[f.pattern.kind]
        name = f"{f.name}:" if f.name else ""
        bind = f" as {f.id}" if f.id else ""
        return f"{name}{body}{bind}"

    ep = fmt(p.endpoint) if p.endpoint else "*"
    if p.direction == REQUEST:
        args = ", ".join(fmt(f) for f in p.parameters + p.headers)
        return f"{p.method or ''} {ep}<{args}>".strip()
    return f"{ep}({', '.join(fmt(f) for f in p.headers)})"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(auto: Automaton) -> str:
    lines = ["digraph automaton {", "  rankdir=LR;"]
    for s in auto.states:
        shape = "doublecircle" if s in auto.finals else "circle"
        lines.append(f'  "{_dot_escape(s)}" [shape={shape}, label="{_dot_escape(auto.labels.get(s, s))}"];')
    names = [t.label for t in auto.all_transitions]
    loop = "not (" + " | ".join(names) + ")"
    for t in auto.all_transitions:
        label = f"{t.label}: {describe_pattern(t.guard)}"
        if t.secrecy:
            label += " :: " + ", ".join(f"{p.target} -> {{{', '.join(p.origins)}}}" for p in t.secrecy)
        if t.integrity:
            label += " & " + ", ".join(f"{p.target} = {p.matches.text}" for p in t.integrity)
        lines.append(f'  "{_dot_escape(t.source)}" -> "{_dot_escape(t.target)}" [label="{_dot_escape(label)}"];')
    for s in auto.states:
        if s not in auto.finals:
            lines.append(f'  "{_dot_escape(s)}" -> "{_dot_escape(s)}" [style=dashed, label="{_dot_escape(loop)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
