"""Live loop: toy IdP, RP and tracker servers behind the monitoring proxy.

Hostnames ``idp.toy``, ``rp.toy`` and ``tracker.toy`` are mapped to local
ports through the proxy's ``resolve`` table, so the bundled
``toy-explicit-nostate`` spec can use fixed origins.
"""
from __future__ import annotations

import http.client
import secrets
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlencode, urljoin, urlsplit

from .engine import EngineConfig
from .proxy import BLOCK_HEADER, MonitorServer, ProxyConfig, start

TOY_SPEC = "toy-explicit-nostate"
CLIENT_ID = "toy-client"


@dataclass
class ServerLog:
    issued_codes: List[str] = field(default_factory=list)
    rp_codes: List[str] = field(default_factory=list)
    tracker_referers: List[str] = field(default_factory=list)


def _toy_handler(role: str, logbook: ServerLog):
    class H(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *_):
            pass

        def _reply(self, status, headers=(), body=b""):
            self.send_response(status)
            for k, v in headers:
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            parts = urlsplit(self.path)
            q = {k: v[0] for k, v in parse_qs(parts.query).items()}
            if role == "idp" and parts.path == "/authorize":
                code = secrets.token_urlsafe(36)
                logbook.issued_codes.append(code)
                sep = "&" if "?" in q.get("redirect_uri", "") else "?"
                self._reply(302, [("Location", f"{q.get('redirect_uri', '')}{sep}code={code}")])
            elif role == "rp" and parts.path == "/login":
                auth = "http://idp.toy/authorize?" + urlencode(
                    {"response_type": "code", "client_id": CLIENT_ID, "redirect_uri": "http://rp.toy/cb"})
                self._reply(302, [("Location", auth)])
            elif role == "rp" and parts.path == "/cb":
                logbook.rp_codes.append(q.get("code", ""))
                self._reply(200, [("Content-Type", "text/html")],
                            b'<p>logged in</p><img src="http://tracker.toy/pixel.gif">')
            elif role == "tracker":
                logbook.tracker_referers.append(self.headers.get("Referer", ""))
                self._reply(200, [("Content-Type", "image/gif")], b"GIF89a")
            else:
                self._reply(404, [("Content-Type", "text/plain")], b"not found\n")

    return H


@dataclass
class Hop:
    url: str
    status: int
    location: Optional[str]
    blocked: Optional[str]
    body: bytes


class ProxyBrowser:
    """Minimal user agent that sends absolute-form requests via the proxy."""

    def __init__(self, proxy_port: int, user: Optional[str] = None):
        self.proxy_port = proxy_port
        self.user = user
        self.hops: List[Hop] = []

    def fetch(self, url: str, headers: Tuple[Tuple[str, str], ...] = ()) -> Hop:
        conn = http.client.HTTPConnection("127.0.0.1", self.proxy_port, timeout=10)
        try:
            hdrs = {"Host": urlsplit(url).netloc, **dict(headers)}
            if self.user:
                hdrs["Proxy-Authorization"] = f"Basic {self.user}"
            conn.request("GET", url, headers=hdrs)
            r = conn.getresponse()
            hop = Hop(url, r.status, r.getheader("Location"), r.getheader(BLOCK_HEADER), r.read())
        finally:
            conn.close()
        self.hops.append(hop)
        return hop

    def navigate(self, url: str, max_hops: int = 10) -> Hop:
        hop = self.fetch(url)
        for _ in range(max_hops):
            if hop.status not in (301, 302, 303, 307) or not hop.location:
                break
            url = urljoin(url, hop.location)
            hop = self.fetch(url)
        # load the one sub-resource the toy RP embeds, with Referer
        if b"tracker.toy" in hop.body:
            self.fetch("http://tracker.toy/pixel.gif", (("Referer", url),))
        return hop


@dataclass
class LiveLoop:
    proxy: MonitorServer
    servers: Dict[str, ThreadingHTTPServer]
    logbook: ServerLog

    def browser(self, user: Optional[str] = None) -> ProxyBrowser:
        return ProxyBrowser(self.proxy.port, user)

    def close(self) -> None:
        self.proxy.shutdown()
        self.proxy.server_close()
        for s in self.servers.values():
            s.shutdown()
            s.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _free_port() -> int:
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def start_live_loop(keying: str = "per-client-ip", engine: Optional[EngineConfig] = None,
                    proxy_port: Optional[int] = None, vlog=None) -> LiveLoop:
    logbook = ServerLog()
    servers = {}
    for role in ("idp", "rp", "tracker"):
        srv = ThreadingHTTPServer(("127.0.0.1", 0), _toy_handler(role, logbook))
        srv.daemon_threads = True
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers[role] = srv
    config = ProxyConfig(
        specs=(TOY_SPEC,),
        listen_port=proxy_port or _free_port(),
        keying=keying,
        engine=engine or EngineConfig(),
        resolve=tuple((f"{r}.toy", f"127.0.0.1:{s.server_address[1]}") for r, s in servers.items()),
    )
    return LiveLoop(start(config, vlog=vlog), servers, logbook)


def demo() -> int:
    """Run the benign login and a forged callback; print what each side saw."""
    with start_live_loop() as loop:
        b = loop.browser()
        final = b.navigate("http://rp.toy/login")
        print(f"login: {final.status} {final.body[:40]!r}")
        for hop in b.hops:
            print(f"  {hop.status} {hop.url}" + (f" -> {hop.location}" if hop.location else ""))
        print(f"IdP issued      : {loop.logbook.issued_codes}")
        print(f"RP received     : {loop.logbook.rp_codes}")
        print(f"tracker Referer : {loop.logbook.tracker_referers}")
        forged = b.fetch("http://rp.toy/cb?code=" + "F" * 48)
        print(f"forged callback : {forged.status} {BLOCK_HEADER}: {forged.blocked}")
        ok = (final.status == 200 and loop.logbook.rp_codes == loop.logbook.issued_codes
              and forged.status == 403)
        return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(demo())
