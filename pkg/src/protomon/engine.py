"""Runtime monitor: drives an automaton over live HTTP events.

Responses are classified on their original content and then stripped of
secrets; requests get placeholders swapped back (only toward origins in the
secret's secrecy set) and are classified afterwards, so guards always see
what the servers see.
"""
from __future__ import annotations

import json
import secrets as _secrets
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, FrozenSet, Iterator, List, Mapping, Optional, Tuple
from urllib.parse import quote, quote_plus, unquote

from .automaton import (
    Automaton,
    Classification,
    Step,
    Transition,
    Unrelated,
    Violation,
    classify,
    expand,
)
from .errors import EntropyUnavailable, MalformedUrl
from .http import HttpEvent, HttpRequest, HttpResponse, Origin, is_form, parse_origin

ALLOW = "allow"
BLOCK = "block"
SECRECY_CONFINEMENT = "secrecy-confinement"

TokenSource = Callable[[int], bytes]


@dataclass(frozen=True)
class EngineConfig:
    placeholder_prefix: str = "WPSE-"
    placeholder_entropy_bytes: int = 16
    run_timeout: float = 300.0
    rewrite_headers: bool = True
    rewrite_url_params: bool = True
    rewrite_form_body: bool = False

    def __post_init__(self):
        if self.placeholder_entropy_bytes < 16:
            raise ValueError("placeholder_entropy_bytes must be at least 16")
        if self.run_timeout <= 0:
            raise ValueError("run_timeout must be positive")


def make_placeholder(
    config: EngineConfig = EngineConfig(),
    token_source: Optional[TokenSource] = None,
    existing=(),
) -> str:
    source = token_source or _secrets.token_bytes
    while True:
        try:
            raw = source(config.placeholder_entropy_bytes)
        except (NotImplementedError, OSError) as exc:
            raise EntropyUnavailable(str(exc)) from exc
        candidate = config.placeholder_prefix + raw.hex()
        if candidate not in existing:
            return candidate


@dataclass(frozen=True)
class Binding:
    value: str
    bound_at: str


class BindingEnv(Mapping[str, str]):
    """Identifier values for the current run; each identifier binds once."""

    def __init__(self):
        self._b: Dict[str, Binding] = {}

    def bind(self, ident: str, value: str, state: str) -> None:
        if ident in self._b:
            raise AssertionError(f"identifier {ident!r} already bound in this run")
        self._b[ident] = Binding(value, state)

    def binding(self, ident: str) -> Binding:
        return self._b[ident]

    def clear(self) -> None:
        self._b.clear()

    def __getitem__(self, ident: str) -> str:
        return self._b[ident].value

    def __iter__(self) -> Iterator[str]:
        return iter(self._b)

    def __len__(self) -> int:
        return len(self._b)


@dataclass(frozen=True)
class VaultEntry:
    secret: str
    origins: FrozenSet[Origin]
    identifier: str = ""

    def __repr__(self) -> str:
        # never print plaintext
        return f"VaultEntry(identifier={self.identifier!r}, origins={sorted(map(str, self.origins))})"


class SecretVault(Mapping[str, VaultEntry]):
    def __init__(self):
        self._entries: Dict[str, VaultEntry] = {}

    def add(self, placeholder: str, entry: VaultEntry) -> None:
        if placeholder in self._entries:
            raise AssertionError("placeholder collision")
        self._entries[placeholder] = entry

    def clear(self) -> None:
        self._entries.clear()

    def __getitem__(self, placeholder: str) -> VaultEntry:
        return self._entries[placeholder]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class Verdict:
    action: str
    event: Optional[HttpEvent]
    classification: str
    state_before: str
    state_after: str
    reason: Optional[str] = None
    spec: Optional[str] = None
    transition: Optional[str] = None
    diagnostics: Tuple[str, ...] = ()
    created: Tuple[str, ...] = ()
    substituted: Tuple[str, ...] = ()
    withheld: Tuple[str, ...] = ()
    rewritten: bool = False
    # placeholder -> entry for secrets created by this event; kept out of logs
    secrets: Mapping[str, VaultEntry] = field(default_factory=dict, repr=False, compare=False)

    @property
    def allowed(self) -> bool:
        return self.action == ALLOW

    @property
    def blocked(self) -> bool:
        return self.action == BLOCK

    @property
    def notes(self) -> Tuple[str, ...]:
        return tuple(f"{SECRECY_CONFINEMENT}: {p} withheld" for p in self.withheld)

    def log_record(self, context_id: str, timestamp: float) -> dict:
        return {
            "ts": round(timestamp, 6),
            "context": context_id,
            "state_before": self.state_before,
            "state_after": self.state_after,
            "classification": self.classification,
            "action": self.action,
            "reason": self.reason,
            "spec": self.spec,
            "transition": self.transition,
            "created": list(self.created),
            "substituted": list(self.substituted),
            "withheld": list(self.withheld),
        }


class VerdictLog:
    """One JSON object per line; safe to share between contexts."""

    def __init__(self, stream):
        self.stream = stream
        self._lock = threading.Lock()

    def __call__(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            self.stream.write(line + "\n")
            self.stream.flush()


def secret_forms(secret: str) -> List[str]:
    """The bound value plus its percent-encoded/decoded spellings, longest first."""
    forms = []
    for f in (secret, quote(secret, safe=""), quote_plus(secret, safe=""), unquote(secret)):
        if f and f not in forms:
            forms.append(f)
    return sorted(forms, key=len, reverse=True)


class MonitorContext:
    """Monitor state for one client. Not reentrant: feed events one at a time."""

    def __init__(
        self,
        automaton: Automaton,
        config: Optional[EngineConfig] = None,
        *,
        context_id: str = "default",
        token_source: Optional[TokenSource] = None,
        clock: Callable[[], float] = time.monotonic,
        log: Optional[Callable[[dict], None]] = None,
    ):
        self.automaton = automaton
        self.config = config or EngineConfig()
        self.context_id = context_id
        self.token_source = token_source
        self.clock = clock
        self.log = log
        self.current_state = automaton.init
        self.env = BindingEnv()
        self.vault = SecretVault()
        self.run_started_at: Optional[float] = None
        self.last_progress_at: Optional[float] = None

    def reset(self) -> None:
        self.current_state = self.automaton.init
        self.env.clear()
        self.vault.clear()
        self.run_started_at = None
        self.last_progress_at = None

    def snapshot(self) -> tuple:
        """Opaque copy of the run state, for exploring alternative continuations."""
        return (self.current_state, dict(self.env._b), dict(self.vault._entries),
                self.run_started_at, self.last_progress_at)

    def restore(self, snap: tuple) -> None:
        state, bindings, entries, started, progress = snap
        self.current_state = state
        self.env._b = dict(bindings)
        self.vault._entries = dict(entries)
        self.run_started_at, self.last_progress_at = started, progress

    @property
    def in_run(self) -> bool:
        return self.current_state != self.automaton.init

    def _expire(self, now: float) -> bool:
        if self.in_run and self.last_progress_at is not None \
                and now - self.last_progress_at > self.config.run_timeout:
            self.reset()
            return True
        return False

    # -- event entry points ---------------------------------------------------

    def on_response(self, resp: HttpResponse, now: Optional[float] = None) -> Verdict:
        now = self.clock() if now is None else now
        diags = ["run timed out; reset"] if self._expire(now) else []
        before = self.current_state
        cls = classify(self.automaton, before, resp, self.env)
        if isinstance(cls, Violation):
            return self._block(cls, before, now, diags)
        created: Dict[str, VaultEntry] = {}
        if isinstance(cls, Step):
            self._bind(cls, now)
            for policy in cls.transition.secrecy:
                self._protect(policy, created, diags)
        out = self._strip(resp)
        after = self._advance(cls)
        return self._emit(Verdict(
            action=ALLOW,
            event=out,
            classification=cls.kind,
            state_before=before,
            state_after=after,
            spec=cls.transition.origin_spec if isinstance(cls, Step) else None,
            transition=cls.transition.label if isinstance(cls, Step) else None,
            diagnostics=tuple(diags),
            created=tuple(created),
            rewritten=out != resp,
            secrets=created,
        ), now)

    def on_request(self, req: HttpRequest, now: Optional[float] = None) -> Verdict:
        now = self.clock() if now is None else now
        diags = ["run timed out; reset"] if self._expire(now) else []
        before = self.current_state
        out, substituted, withheld = self._substitute(req)
        cls = classify(self.automaton, before, out, self.env)
        if isinstance(cls, Violation):
            return self._block(cls, before, now, diags)
        if isinstance(cls, Step):
            self._bind(cls, now)
        after = self._advance(cls)
        return self._emit(Verdict(
            action=ALLOW,
            event=out,
            classification=cls.kind,
            state_before=before,
            state_after=after,
            spec=cls.transition.origin_spec if isinstance(cls, Step) else None,
            transition=cls.transition.label if isinstance(cls, Step) else None,
            diagnostics=tuple(diags),
            substituted=substituted,
            withheld=withheld,
            rewritten=out != req,
        ), now)

    def on_event(self, event: HttpEvent, now: Optional[float] = None) -> Verdict:
        if isinstance(event, HttpRequest):
            return self.on_request(event, now)
        return self.on_response(event, now)

    # -- internals ------------------------------------------------------------

    def _emit(self, verdict: Verdict, now: float) -> Verdict:
        if self.log is not None:
            self.log(verdict.log_record(self.context_id, now))
        return verdict

    def _block(self, cls: Violation, before: str, now: float, diags: List[str]) -> Verdict:
        self.reset()
        t = cls.transition
        return self._emit(Verdict(
            action=BLOCK,
            event=None,
            classification=cls.kind,
            state_before=before,
            state_after=self.current_state,
            reason=cls.reason,
            spec=t.origin_spec if t else None,
            transition=t.label if t else None,
            diagnostics=tuple(diags) + (cls.detail,),
        ), now)

    def _bind(self, step: Step, now: float) -> None:
        if not self.in_run:
            self.run_started_at = now
        self.last_progress_at = now
        for ident, value in step.bindings.items():
            self.env.bind(ident, value, step.transition.target)

    def _advance(self, cls: Classification) -> str:
        if isinstance(cls, Step):
            self.current_state = cls.transition.target
            if self.current_state in self.automaton.finals:
                self.reset()
        return self.current_state

    def _protect(self, policy, created: Dict[str, VaultEntry], diags: List[str]) -> None:
        secret = self.env.get(policy.target_id, "")
        if not secret:
            diags.append(f"{policy.target}: empty value, nothing to protect")
            return
        origins = set()
        for template in policy.origins:
            try:
                origins.add(parse_origin(expand(template, self.env)))
            except MalformedUrl as exc:
                diags.append(f"{policy.target}: origin {template!r} unusable ({exc})")
        placeholder = make_placeholder(self.config, self.token_source, self.vault)
        entry = VaultEntry(secret, frozenset(origins), policy.target_id)
        self.vault.add(placeholder, entry)
        created[placeholder] = entry

    def _strip(self, resp: HttpResponse) -> HttpResponse:
        """Replace every vault secret in the client-bound response."""
        if not self.vault:
            return resp
        pairs = [(form, ph) for ph, e in self.vault.items() for form in secret_forms(e.secret)]
        pairs.sort(key=lambda p: len(p[0]), reverse=True)

        def strip(text: str) -> str:
            for form, ph in pairs:
                if form in text:
                    text = text.replace(form, ph)
            return text

        out = resp
        if self.config.rewrite_headers:
            out = replace(out, headers=out.headers.map_values(strip))
        if self.config.rewrite_form_body and out.body:
            body = strip(out.body.decode("utf-8", "surrogateescape"))
            out = replace(out, body=body.encode("utf-8", "surrogateescape"))
        return out

    def _substitute(self, req: HttpRequest):
        if not self.vault:
            return req, (), ()
        dest = req.url.origin
        substituted: List[str] = []
        withheld: List[str] = []

        def swap(text: str) -> str:
            for ph, entry in self.vault.items():
                if ph in text:
                    if dest in entry.origins:
                        text = text.replace(ph, entry.secret)
                        if ph not in substituted:
                            substituted.append(ph)
                    elif ph not in withheld:
                        withheld.append(ph)
            return text

        out = req
        if self.config.rewrite_headers:
            out = replace(out, headers=out.headers.map_values(swap))
        if self.config.rewrite_url_params and out.url.has_query:
            out = out.with_url(replace(out.url, query=swap(out.url.query)))
        if self.config.rewrite_form_body and out.body and is_form(out.headers):
            body = swap(out.body.decode("utf-8", "surrogateescape"))
            out = replace(out, body=body.encode("utf-8", "surrogateescape"))
        return out, tuple(substituted), tuple(withheld)


# functional spellings of the context methods
def on_request(ctx: MonitorContext, req: HttpRequest, now: Optional[float] = None) -> Verdict:
    return ctx.on_request(req, now)


def on_response(ctx: MonitorContext, resp: HttpResponse, now: Optional[float] = None) -> Verdict:
    return ctx.on_response(resp, now)


def reset(ctx: MonitorContext) -> None:
    ctx.reset()
