"""Recorded-trace scenarios and the replay harness.

A scenario file is JSON lines: a header object (``scenario``, ``kind``,
``specs``, ...) followed by one object per step with the fields
``actor, direction, method, url, headers, params, body, status, expect,
expect_reason, time_offset_s``.

Steps are written as the servers would see them in an unmonitored run.
When replaying a request, the harness plays the browser: any plaintext
secret the monitor has replaced with a placeholder is, from the page's
point of view, only known as that placeholder, so it is swapped in before
the request reaches the monitor.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
from urllib.parse import urlencode

from ..automaton import Automaton, compose
from ..engine import EngineConfig, MonitorContext, VaultEntry, Verdict, secret_forms
from ..errors import MalformedUrl, ScenarioError
from ..http import HttpEvent, HttpRequest, HttpResponse, make_request, make_response, parse_url
from .catalog import resolve_specs

ACTORS = ("browser", "attacker-page", "rp", "idp", "tracker")
EXPECTS = ("allow", "allow-rewritten", "block")
REASONS = {
    "allow": (None,),
    "allow-rewritten": ("placeholder-created", "placeholder-substituted", "secrecy-confinement"),
    "block": ("flow-deviation", "integrity-failure"),
}
KINDS = ("benign", "attack", "extra")


@dataclass(frozen=True)
class ScenarioStep:
    actor: str
    event: HttpEvent
    expect: str = "allow"
    expect_reason: Optional[str] = None
    time_offset_s: float = 0.0
    raw: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    specs: Tuple[str, ...]
    steps: Tuple[ScenarioStep, ...]
    kind: str = "benign"
    attack_class: Optional[str] = None
    attack_step: Optional[int] = None
    base_dir: Optional[str] = None


# -- file format --------------------------------------------------------------

def _build_event(obj: dict, where: str) -> HttpEvent:
    direction = obj.get("direction")
    url = obj.get("url")
    if not isinstance(url, str):
        raise ScenarioError(f"{where}: missing url")
    headers = [tuple(h) for h in obj.get("headers", [])]
    body = obj.get("body")
    body = body.encode("utf-8") if isinstance(body, str) else None
    try:
        if direction == "request":
            params = [tuple(p) for p in obj.get("params", [])]
            method = obj.get("method", "GET").upper()
            if params:
                encoded = urlencode(params)
                if method == "GET":
                    sep = "&" if "?" in url else "?"
                    url = f"{url}{sep}{encoded}"
                else:
                    body = encoded.encode("ascii")
                    headers.append(("Content-Type", "application/x-www-form-urlencoded"))
            return make_request(method, url, headers, body)
        if direction == "response":
            return make_response(int(obj.get("status", 200)), url, headers, body)
    except (MalformedUrl, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    raise ScenarioError(f"{where}: direction must be 'request' or 'response'")


def parse_scenario(text: str, name_hint: str = "", base_dir: Optional[str] = None) -> Scenario:
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise ScenarioError(f"{name_hint}: empty scenario")
    objs = []
    for i, ln in lines:
        try:
            objs.append((i, json.loads(ln)))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{name_hint}:{i}: {exc}") from None
    _, head = objs[0]
    if "scenario" not in head:
        raise ScenarioError(f"{name_hint}: first line must be a header with a 'scenario' field")
    steps = []
    seen_requests = set()
    for i, obj in objs[1:]:
        where = f"{name_hint}:{i}"
        actor = obj.get("actor", "browser")
        if actor not in ACTORS:
            raise ScenarioError(f"{where}: unknown actor {actor!r}")
        expect = obj.get("expect", "allow")
        reason = obj.get("expect_reason")
        if expect not in EXPECTS or reason not in REASONS[expect]:
            raise ScenarioError(f"{where}: bad expectation {expect!r}/{reason!r}")
        event = _build_event(obj, where)
        if isinstance(event, HttpRequest):
            seen_requests.add(event.url.endpoint)
        elif event.request_url.endpoint not in seen_requests:
            raise ScenarioError(f"{where}: response to {event.request_url} has no prior request")
        steps.append(ScenarioStep(actor, event, expect, reason, float(obj.get("time_offset_s", 0)), obj))
    kind = head.get("kind", "benign")
    if kind not in KINDS:
        raise ScenarioError(f"{name_hint}: unknown kind {kind!r}")
    return Scenario(
        name=head["scenario"],
        description=head.get("description", ""),
        specs=tuple(head.get("specs", ())),
        steps=tuple(steps),
        kind=kind,
        attack_class=head.get("attack_class"),
        attack_step=head.get("attack_step"),
        base_dir=base_dir,
    )


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.name, str(path.parent))


def _scenario_dir():
    return resources.files(__package__) / "scenarios"


def _walk(res):
    for child in sorted(res.iterdir(), key=lambda r: r.name):
        if child.is_dir():
            yield from _walk(child)
        elif child.name.endswith(".scenario"):
            yield child


def builtin_scenarios(kind: Optional[str] = None) -> Dict[str, Scenario]:
    """Bundled scenarios by name, optionally only one kind (benign/attack/extra)."""
    out = {}
    for res in _walk(_scenario_dir()):
        sc = parse_scenario(res.read_text(encoding="utf-8"), res.name)
        if kind is None or sc.kind == kind:
            out[sc.name] = sc
    return out


# -- replay -------------------------------------------------------------------

@dataclass(frozen=True)
class StepResult:
    index: int
    actor: str
    summary: str
    verdict: Verdict
    expect: str
    expect_reason: Optional[str]
    ok: bool
    problem: str = ""


@dataclass(frozen=True)
class ScenarioReport:
    scenario: Scenario
    results: Tuple[StepResult, ...]
    final_state: str
    seed: int
    error: str = ""

    @property
    def passed(self) -> bool:
        return not self.error and all(r.ok for r in self.results)

    @property
    def blocks(self) -> List[StepResult]:
        return [r for r in self.results if r.verdict.blocked]

    @property
    def first_failure(self) -> Optional[int]:
        """Index of the first step where the protocol attack was stopped."""
        for r in self.results:
            if r.verdict.blocked or r.expect_reason == "secrecy-confinement":
                return r.index
        return None

    def render(self) -> str:
        sc = self.scenario
        tag = sc.kind if not sc.attack_class else f"{sc.kind}/{sc.attack_class}"
        lines = [f"scenario {sc.name} [{tag}] seed={self.seed}: {'PASS' if self.passed else 'FAIL'}"]
        for r in self.results:
            v = r.verdict
            what = v.reason or v.classification
            extra = []
            if v.created:
                extra.append("created=" + ",".join(v.created))
            if v.substituted:
                extra.append("substituted=" + ",".join(v.substituted))
            if v.withheld:
                extra.append("withheld=" + ",".join(v.withheld))
            want = r.expect + (f"/{r.expect_reason}" if r.expect_reason else "")
            lines.append(
                f"  {r.index:02d} {r.actor:<13} {r.summary}\n"
                f"     -> {v.action} ({what}) {v.state_before} => {v.state_after}"
                + (f" {' '.join(extra)}" if extra else "")
                + f"  expect {want}: {'ok' if r.ok else 'MISMATCH ' + r.problem}"
            )
        if self.error:
            lines.append(f"  error: {self.error}")
        lines.append(f"  final state: {self.final_state}")
        return "\n".join(lines) + "\n"


def _summary(ev: HttpEvent) -> str:
    if isinstance(ev, HttpRequest):
        return f"{ev.method} {ev.url}"
    loc = ev.headers.get("location")
    return f"{ev.status} from {ev.request_url.endpoint}" + (f" Location: {loc}" if loc else "")


def _event_text(ev: HttpEvent) -> str:
    # a response's request URL is not client-bound content
    parts = [str(ev.url)] if isinstance(ev, HttpRequest) else []
    parts += [v for _, v in ev.headers]
    if ev.body:
        parts.append(ev.body.decode("utf-8", "surrogateescape"))
    return "\n".join(parts)


def _as_browser_sees(req: HttpRequest, known: Dict[str, VaultEntry]) -> HttpRequest:
    """Swap plaintext secrets the page never saw for their placeholders."""
    if not known:
        return req
    # the newest placeholder for a value wins (a run may restart with it)
    latest = {f: ph for ph, e in known.items() for f in secret_forms(e.secret)}
    pairs = sorted(latest.items(), key=lambda p: len(p[0]), reverse=True)

    def hide(text: str) -> str:
        for form, ph in pairs:
            text = text.replace(form, ph)
        return text

    url = parse_url(hide(str(req.url)))
    body = hide(req.body.decode("utf-8", "surrogateescape")).encode("utf-8", "surrogateescape") \
        if req.body else req.body
    return HttpRequest(req.method, url, req.headers.map_values(hide), body)


def _check(step: ScenarioStep, v: Verdict, known: Dict[str, VaultEntry]) -> str:
    """Empty string when the verdict meets the step's expectation."""
    if step.expect == "block":
        if not v.blocked:
            return "not blocked"
        if v.reason != step.expect_reason:
            return f"blocked for {v.reason}"
        return ""
    if not v.allowed:
        return f"blocked for {v.reason}"
    text = _event_text(v.event)
    if step.expect == "allow":
        if v.rewritten or v.withheld:
            return "unexpected rewrite"
        return ""
    reason = step.expect_reason
    if reason == "placeholder-created":
        if not v.created:
            return "no placeholder created"
        if any(f in text for e in v.secrets.values() for f in secret_forms(e.secret)):
            return "plaintext secret left in response"
        if not all(ph in text for ph in v.created):
            return "placeholder missing from response"
        return ""
    if reason == "placeholder-substituted":
        if not v.substituted:
            return "no placeholder substituted"
        if any(ph in text for ph in v.substituted):
            return "placeholder left in request"
        return ""
    # secrecy-confinement: placeholders reach the foreign origin, secrets do not
    dest = v.event.url.origin
    present = [ph for ph in known if ph in text]
    if not present:
        return "no placeholder in request"
    if v.substituted:
        return "placeholder substituted"
    for ph, e in known.items():
        if dest not in e.origins and any(f in text for f in secret_forms(e.secret)):
            return "plaintext secret reached a foreign origin"
    return ""


def build_automaton(sc: Scenario, spec_refs: Optional[Sequence[str]] = None) -> Automaton:
    refs = list(spec_refs) if spec_refs is not None else list(sc.specs)
    if not refs:
        raise ScenarioError(f"{sc.name}: no specs listed")
    return compose(resolve_specs(refs, sc.base_dir))


def run_scenario(
    sc: Scenario,
    seed: int = 0,
    automaton: Optional[Automaton] = None,
    config: Optional[EngineConfig] = None,
    log=None,
) -> ScenarioReport:
    auto = automaton or build_automaton(sc)
    rng = random.Random(seed)
    clock = [0.0]
    ctx = MonitorContext(auto, config, context_id=sc.name, token_source=rng.randbytes,
                         clock=lambda: clock[0], log=log)
    known: Dict[str, VaultEntry] = {}
    results = []
    for i, step in enumerate(sc.steps):
        clock[0] += step.time_offset_s
        event = step.event
        if isinstance(event, HttpRequest):
            event = _as_browser_sees(event, known)
        verdict = ctx.on_event(event)
        known.update(verdict.secrets)
        problem = _check(step, verdict, known)
        results.append(StepResult(i, step.actor, _summary(event), verdict,
                                  step.expect, step.expect_reason, not problem, problem))
    error = ""
    if sc.kind == "attack":
        stops = [r.index for r in results
                 if r.verdict.blocked or r.expect_reason == "secrecy-confinement"]
        if sc.attack_step is None:
            error = "attack scenario without attack_step"
        elif not stops or stops[0] != sc.attack_step:
            error = f"attack stopped at step {stops[0] if stops else None}, expected {sc.attack_step}"
    elif sc.kind == "benign" and any(r.verdict.blocked for r in results):
        error = "benign scenario was blocked"
    return ScenarioReport(sc, tuple(results), ctx.current_state, seed, error)


def replay(scenarios: Iterable[Scenario], seed: int = 0) -> List[ScenarioReport]:
    return [run_scenario(sc, seed) for sc in scenarios]


def dump_scenario(sc_header: dict, steps: Sequence[dict]) -> str:
    """Serialize a header and step dicts to the line-delimited format."""
    lines = [json.dumps(sc_header, sort_keys=False)]
    lines += [json.dumps(s, sort_keys=False) for s in steps]
    return "\n".join(lines) + "\n"
