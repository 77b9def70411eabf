import pytest
from hypothesis import given, strategies as st

from protomon.errors import MalformedMessage, MalformedUrl
from protomon.http import (
    Headers,
    Origin,
    extract_params,
    make_request,
    make_response,
    origin_of,
    parse_origin,
    parse_request,
    parse_response,
    parse_url,
    serialize_request,
    serialize_response,
)


def test_url_decomposition():
    u = parse_url("https://accounts.google.com/o/oauth2/auth?response_type=code")
    assert (u.scheme, u.host, u.port, u.path, u.query, u.fragment) == (
        "https", "accounts.google.com", 443, "/o/oauth2/auth", "response_type=code", "")


def test_default_port_elided():
    assert str(parse_url("http://rp.example:80/cb")) == "http://rp.example/cb"


@pytest.mark.parametrize("bad", ["cb?code=x", "/cb", "ftp://x.example/", "https://user@x.example/",
                                 "https://x.example:99999/", "https:///path"])
def test_malformed_urls(bad):
    with pytest.raises(MalformedUrl):
        parse_url(bad)


def test_origin_of():
    assert str(origin_of("https://rp.example/cb?x=1")) == "https://rp.example/"
    assert str(origin_of("http://a.example:8080/p")) == "http://a.example:8080/"
    assert origin_of("https://ATTACKER.example/") == origin_of("https://attacker.example/")


def test_endpoint_excludes_query_and_defaults_path():
    assert parse_url("https://rp.example?x=1").endpoint == "https://rp.example/"
    assert parse_url("https://rp.example:8443/cb?x=1#f").endpoint == "https://rp.example:8443/cb"


def test_extract_params_query():
    req = make_request("GET", "https://rp.example/cb?code=abc&state=s1")
    assert extract_params(req) == [("code", "abc"), ("state", "s1")]


def test_extract_params_form_body():
    req = make_request("POST", "https://sp.example/acs",
                       [("Content-Type", "application/x-www-form-urlencoded")],
                       b"SAMLResponse=R&RelayState=U")
    assert extract_params(req) == [("SAMLResponse", "R"), ("RelayState", "U")]


def test_extract_params_ignores_non_form_body():
    req = make_request("POST", "https://sp.example/acs?a=1", [("Content-Type", "text/plain")], b"b=2")
    assert extract_params(req) == [("a", "1")]


def test_extract_params_duplicates_kept():
    assert extract_params(make_request("GET", "https://x.example/cb?a=1&a=2")) == [("a", "1"), ("a", "2")]


def test_headers_case_insensitive_names_exact_values():
    h = Headers([("Location", "A"), ("set-cookie", "x"), ("Set-Cookie", "y")])
    assert h.get("location") == "A"
    assert h.get_all("SET-COOKIE") == ["x", "y"]
    assert h.get("missing") is None


def test_response_status_range():
    with pytest.raises(ValueError):
        make_response(600, "https://x.example/")
    with pytest.raises(ValueError):
        make_response(99, "https://x.example/")


def test_request_wire_round_trip():
    raw = (b"GET /cb?code=abc HTTP/1.1\r\nHost: rp.example\r\nUser-Agent: t\r\n\r\n")
    req = parse_request(raw, "https")
    assert str(req.url) == "https://rp.example/cb?code=abc"
    assert serialize_request(req) == raw


def test_absolute_form_round_trip():
    raw = b"POST http://sp.example/acs HTTP/1.1\r\nHost: sp.example\r\nContent-Length: 3\r\n\r\na=b"
    req = parse_request(raw)
    assert req.absolute_form and req.body == b"a=b"
    assert serialize_request(req) == raw


def test_response_wire_round_trip():
    raw = b"HTTP/1.1 302 Found\r\nLocation: https://rp.example/cb?code=x\r\n\r\n"
    resp = parse_response(raw, "https://idp.example/auth")
    assert resp.status == 302 and resp.headers.get("location").endswith("code=x")
    assert serialize_response(resp) == raw


def test_malformed_messages():
    with pytest.raises(MalformedMessage):
        parse_request(b"GET / HTTP/1.1\r\n")
    with pytest.raises(MalformedMessage):
        parse_request(b"GET /x HTTP/1.1\r\n\r\n")  # origin form needs Host
    with pytest.raises(MalformedMessage):
        parse_response(b"HTTP/1.1 abc\r\n\r\n", "https://x.example/")


_host = st.from_regex(r"\A[a-z][a-z0-9\-]{0,10}(\.[a-z]{2,5}){1,2}\Z")
_seg = st.from_regex(r"\A[A-Za-z0-9_\-.~]{0,8}\Z")
_qtext = st.from_regex(r"\A[A-Za-z0-9_\-.~=&%]{0,20}\Z")
_hval = st.from_regex(r"\A[!-~]([ -~]{0,20}[!-~])?\Z")
_hname = st.from_regex(r"\A[A-Za-z][A-Za-z0-9\-]{0,12}\Z")


@given(_host, st.lists(_seg, max_size=4), st.one_of(st.none(), _qtext),
       st.lists(st.tuples(_hname, _hval), max_size=5), st.binary(max_size=30))
def test_request_round_trip_property(host, segs, query, headers, body):
    target = "/" + "/".join(segs) + (f"?{query}" if query is not None else "")
    head = f"POST {target} HTTP/1.1\r\nHost: {host}\r\n" + "".join(f"{k}: {v}\r\n" for k, v in headers)
    raw = head.encode("latin-1") + b"\r\n" + body
    assert serialize_request(parse_request(raw)) == raw


@given(st.sampled_from(["http", "https"]), _host, st.one_of(st.none(), st.integers(1, 65535)))
def test_origin_reparse_idempotent(scheme, host, port):
    text = f"{scheme}://{host}" + (f":{port}" if port else "") + "/x?y"
    o = origin_of(text)
    assert origin_of(parse_url(str(o))) == o
    assert parse_origin(str(o)) == o
    assert isinstance(o, Origin)


@given(st.lists(st.tuples(st.from_regex(r"\A[a-z]{1,4}\Z"), st.from_regex(r"\A[a-z0-9]{0,4}\Z")), max_size=6))
def test_extract_params_stable(pairs):
    q = "&".join(f"{k}={v}" for k, v in pairs)
    req = make_request("GET", f"https://x.example/p?{q}")
    assert extract_params(req) == extract_params(req) == list(pairs)
