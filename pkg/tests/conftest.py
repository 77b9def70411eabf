from __future__ import annotations

import random
from typing import Dict

import pytest

from protomon.automaton import compile_spec, compose
from protomon.engine import EngineConfig, MonitorContext
from protomon.http import make_request, make_response
from protomon.library import builtin_spec

GOOGLE_AUTH = "https://accounts.google.com/o/oauth2/auth"
REDIRECT = "https://rp.example/cb"
CODE = "SplxlOBeZQQYbYS6WxSbIA0123456789abcdefgh"  # 40 chars


def phi1(redirect=REDIRECT):
    return make_request("GET", f"{GOOGLE_AUTH}?response_type=code&client_id=c&redirect_uri={redirect}")


def phi2(code=CODE, redirect=REDIRECT):
    return make_response(302, f"{GOOGLE_AUTH}?response_type=code&redirect_uri={redirect}",
                         [("Location", f"{redirect}?code={code}")])


def phi3(code=CODE, redirect=REDIRECT):
    return make_request("GET", f"{redirect}?code={code}")


class Clock:
    def __init__(self, t: float = 1000.0):
        self.t = t

    def __call__(self) -> float:
        return self.t


@pytest.fixture
def ref_spec():
    return builtin_spec("google-explicit-nostate")


@pytest.fixture
def ref_auto(ref_spec):
    return compile_spec(ref_spec)


@pytest.fixture
def clock():
    return Clock()


@pytest.fixture
def make_ctx(clock):
    def factory(auto, config=None, seed=0, **kw):
        rng = random.Random(seed)
        return MonitorContext(auto, config or EngineConfig(), token_source=rng.randbytes, clock=clock, **kw)
    return factory


@pytest.fixture(scope="session")
def four_spec_auto():
    names = ["google-implicit-state", "google-implicit-nostate", "google-explicit-state", "google-explicit-nostate"]
    return compose([builtin_spec(n) for n in names])


# -- acceptance summary --------------------------------------------------------

_ACCEPTANCE: Dict[str, tuple] = {}


@pytest.fixture
def acceptance(request):
    """Record one criterion outcome; printed at the end of the session."""
    def record(label: str, ok: bool, detail: str = ""):
        _ACCEPTANCE[label] = (ok, detail)
        assert ok, f"{label}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split(".")[0])):
        ok, detail = _ACCEPTANCE[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else ""))
