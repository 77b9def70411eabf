"""Browser-side monitor for web protocols.

Protocol specs (XML) compile into guarded automata; a MonitorContext drives
one over the HTTP events of a client, blocking out-of-flow or tampered
messages and keeping secrets behind placeholders.
"""
from .automaton import Automaton, Step, Unrelated, Violation, classify, compile_spec, compose, to_dot
from .engine import EngineConfig, MonitorContext, Verdict, VerdictLog, make_placeholder
from .errors import ProtomonError, SpecError
from .http import HttpRequest, HttpResponse, make_request, make_response, parse_url
from .spec import ProtocolSpec, load_spec, parse_spec, serialize_spec, validate_spec

__all__ = [
    "Automaton", "Step", "Unrelated", "Violation", "classify", "compile_spec", "compose", "to_dot",
    "EngineConfig", "MonitorContext", "Verdict", "VerdictLog", "make_placeholder",
    "ProtomonError", "SpecError",
    "HttpRequest", "HttpResponse", "make_request", "make_response", "parse_url",
    "ProtocolSpec", "load_spec", "parse_spec", "serialize_spec", "validate_spec",
]
