"""Normalized HTTP messages and the URL/origin algebra the matcher works on.

Header values and URL text are kept as ``str`` (latin-1 for raw bytes, the
same convention as :mod:`http.client`); bodies stay ``bytes``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence, Tuple, Union
from urllib.parse import parse_qsl

from .errors import MalformedMessage, MalformedUrl

DEFAULT_PORTS = {"http": 80, "https": 443}

_URL_RE = re.compile(
    r"^(?P<scheme>[A-Za-z][A-Za-z0-9+.\-]*)://"
    r"(?P<authority>[^/?#]*)"
    r"(?P<path>[^?#]*)"
    r"(?:\?(?P<query>[^#]*))?"
    r"(?:#(?P<fragment>.*))?$",
    re.DOTALL,
)
_HOST_RE = re.compile(r"^(?:\[[0-9A-Fa-f:.]+\]|[A-Za-z0-9\-._~%!$&'()*+,;=]+)$")

FORM_CONTENT_TYPE = "application/x-www-form-urlencoded"


@dataclass(frozen=True)
class Origin:
    scheme: str
    host: str
    port: int

    def __str__(self) -> str:
        if DEFAULT_PORTS.get(self.scheme) == self.port:
            return f"{self.scheme}://{self.host}/"
        return f"{self.scheme}://{self.host}:{self.port}/"


@dataclass(frozen=True)
class AbsoluteUrl:
    scheme: str
    host: str
    port: int
    path: str
    query: str = ""
    fragment: str = ""
    # '?'/'#' with empty content must survive a round trip
    has_query: bool = False
    has_fragment: bool = False
    explicit_port: bool = False

    @property
    def origin(self) -> Origin:
        return Origin(self.scheme, self.host, self.port)

    @property
    def netloc(self) -> str:
        if DEFAULT_PORTS.get(self.scheme) == self.port:
            return self.host
        return f"{self.host}:{self.port}"

    @property
    def endpoint(self) -> str:
        """scheme://host[:port]/path, the string endpoint patterns match."""
        return f"{self.scheme}://{self.netloc}{self.path or '/'}"

    @property
    def target(self) -> str:
        """Origin-form request target (path plus query)."""
        t = self.path or "/"
        if self.has_query:
            t += "?" + self.query
        return t

    def with_query(self, query: str) -> "AbsoluteUrl":
        return replace(self, query=query, has_query=self.has_query or bool(query))

    def __str__(self) -> str:
        s = f"{self.scheme}://{self.netloc}{self.path}"
        if self.has_query:
            s += "?" + self.query
        if self.has_fragment:
            s += "#" + self.fragment
        return s


def parse_url(text: str) -> AbsoluteUrl:
    m = _URL_RE.match(text)
    if m is None:
        raise MalformedUrl(f"not an absolute URL: {text!r}")
    scheme = m["scheme"].lower()
    if scheme not in DEFAULT_PORTS:
        raise MalformedUrl(f"unsupported scheme {scheme!r} in {text!r}")
    authority = m["authority"]
    if "@" in authority:
        raise MalformedUrl(f"userinfo is not supported: {text!r}")
    host, port_text = authority, ""
    if authority.startswith("["):
        end = authority.find("]")
        if end < 0:
            raise MalformedUrl(f"unterminated IPv6 literal in {text!r}")
        host, rest = authority[: end + 1], authority[end + 1:]
        if rest:
            if not rest.startswith(":"):
                raise MalformedUrl(f"garbage after host in {text!r}")
            port_text = rest[1:]
    elif ":" in authority:
        host, port_text = authority.rsplit(":", 1)
    if not host or not _HOST_RE.match(host):
        raise MalformedUrl(f"bad host in {text!r}")
    if port_text:
        if not port_text.isdigit() or not 0 < int(port_text) < 65536:
            raise MalformedUrl(f"bad port in {text!r}")
        port = int(port_text)
    else:
        port = DEFAULT_PORTS[scheme]
    return AbsoluteUrl(
        scheme=scheme,
        host=host.lower(),
        port=port,
        path=m["path"],
        query=m["query"] or "",
        fragment=m["fragment"] or "",
        has_query=m["query"] is not None,
        has_fragment=m["fragment"] is not None,
        explicit_port=bool(port_text),
    )


def origin_of(url: Union[AbsoluteUrl, str]) -> Origin:
    if isinstance(url, str):
        url = parse_url(url)
    return url.origin


def parse_origin(text: str) -> Origin:
    """Parse an origin literal such as ``https://accounts.google.com/``."""
    return parse_url(text.strip()).origin


class Headers(Sequence[Tuple[str, str]]):
    """Ordered, immutable header multimap with case-insensitive names."""

    __slots__ = ("_items",)

    def __init__(self, items: Iterable[Tuple[str, str]] = ()):
        self._items = tuple((str(k), str(v)) for k, v in items)

    def __getitem__(self, i):
        return self._items[i]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Tuple[str, str]]:
        return iter(self._items)

    def __eq__(self, other) -> bool:
        if isinstance(other, Headers):
            return self._items == other._items
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"Headers({list(self._items)!r})"

    def get_all(self, name: str) -> list:
        name = name.lower()
        return [v for k, v in self._items if k.lower() == name]

    def get(self, name: str, default: Optional[str] = None) -> Optional[str]:
        values = self.get_all(name)
        return values[0] if values else default

    def map_values(self, fn) -> "Headers":
        return Headers((k, fn(v)) for k, v in self._items)


def _split_pairs(text: str) -> list:
    return parse_qsl(text, keep_blank_values=True, encoding="utf-8", errors="surrogateescape")


def is_form(headers: Headers) -> bool:
    ctype = headers.get("content-type") or ""
    return ctype.split(";")[0].strip().lower() == FORM_CONTENT_TYPE


@dataclass(frozen=True)
class HttpRequest:
    method: str
    url: AbsoluteUrl
    headers: Headers = field(default_factory=Headers)
    body: Optional[bytes] = None
    # wire details kept only so unmodified messages re-serialize exactly
    version: str = "HTTP/1.1"
    absolute_form: bool = False

    @property
    def params(self) -> list:
        return extract_params(self)

    @property
    def origin(self) -> Origin:
        return self.url.origin

    def with_url(self, url: AbsoluteUrl) -> "HttpRequest":
        return replace(self, url=url)


@dataclass(frozen=True)
class HttpResponse:
    status: int
    request_url: AbsoluteUrl
    headers: Headers = field(default_factory=Headers)
    body: Optional[bytes] = None
    version: str = "HTTP/1.1"
    reason: str = ""

    def __post_init__(self):
        if not 100 <= self.status <= 599:
            raise MalformedMessage(f"status {self.status} outside [100, 599]")


HttpEvent = Union[HttpRequest, HttpResponse]


def extract_params(req: HttpRequest) -> list:
    """Query parameters in URL order, then form-body parameters in body order."""
    params = _split_pairs(req.url.query) if req.url.query else []
    if req.body and is_form(req.headers):
        params += _split_pairs(req.body.decode("utf-8", "surrogateescape"))
    return params


def make_request(
    method: str,
    url: Union[str, AbsoluteUrl],
    headers: Iterable[Tuple[str, str]] = (),
    body: Optional[bytes] = None,
) -> HttpRequest:
    if isinstance(url, str):
        url = parse_url(url)
    return HttpRequest(method.upper(), url, Headers(headers), body)


def make_response(
    status: int,
    request_url: Union[str, AbsoluteUrl],
    headers: Iterable[Tuple[str, str]] = (),
    body: Optional[bytes] = None,
) -> HttpResponse:
    if isinstance(request_url, str):
        request_url = parse_url(request_url)
    return HttpResponse(status, request_url, Headers(headers), body)


# -- wire format ------------------------------------------------------------

def _split_head(raw: bytes):
    head, sep, body = raw.partition(b"\r\n\r\n")
    if not sep:
        raise MalformedMessage("missing header terminator")
    lines = head.decode("latin-1").split("\r\n")
    headers = []
    for line in lines[1:]:
        name, colon, value = line.partition(":")
        if not colon or not name or name != name.strip():
            raise MalformedMessage(f"bad header line {line!r}")
        headers.append((name, value.strip(" \t")))
    return lines[0], Headers(headers), body


def parse_request(raw: bytes, scheme: str = "http") -> HttpRequest:
    """Parse an HTTP/1.x request with a complete (non-chunked) body."""
    start, headers, body = _split_head(raw)
    parts = start.split(" ")
    if len(parts) != 3:
        raise MalformedMessage(f"bad request line {start!r}")
    method, target, version = parts
    if target.startswith("/"):
        host = headers.get("host")
        if not host:
            raise MalformedMessage("origin-form request without Host header")
        url = parse_url(f"{scheme}://{host}{target}")
        absolute = False
    else:
        url = parse_url(target)
        absolute = True
    return HttpRequest(method, url, headers, body or None, version, absolute)


def serialize_request(req: HttpRequest) -> bytes:
    if req.absolute_form:
        target = str(replace(req.url, fragment="", has_fragment=False))
    else:
        target = req.url.target
    lines = [f"{req.method} {target} {req.version}"]
    lines += [f"{k}: {v}" for k, v in req.headers]
    return "\r\n".join(lines).encode("latin-1") + b"\r\n\r\n" + (req.body or b"")


def parse_response(raw: bytes, request_url: Union[str, AbsoluteUrl]) -> HttpResponse:
    start, headers, body = _split_head(raw)
    version, _, rest = start.partition(" ")
    code, _, reason = rest.partition(" ")
    if not code.isdigit():
        raise MalformedMessage(f"bad status line {start!r}")
    if isinstance(request_url, str):
        request_url = parse_url(request_url)
    return HttpResponse(int(code), request_url, headers, body or None, version, reason)


def serialize_response(resp: HttpResponse) -> bytes:
    start = f"{resp.version} {resp.status}"
    if resp.reason:
        start += f" {resp.reason}"
    lines = [start] + [f"{k}: {v}" for k, v in resp.headers]
    return "\r\n".join(lines).encode("latin-1") + b"\r\n\r\n" + (resp.body or b"")
