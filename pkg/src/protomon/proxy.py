"""Intercepting HTTP proxy that runs every exchange through a monitor.

Plain-HTTP requests arrive in absolute form and are monitored. CONNECT
tunnels are spliced through untouched unless ``tls = terminate`` is set, in
which case the proxy answers the TLS handshake itself with a leaf
certificate minted from a local CA and monitors the tunnelled requests too.
"""
from __future__ import annotations

import datetime as _dt
import html
import http.client
import ipaddress
import logging
import select
import socket
import ssl
import sys
import tempfile
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, Optional, Tuple

from .automaton import Automaton, compose
from .engine import EngineConfig, MonitorContext, VerdictLog
from .errors import ConfigError, MalformedUrl
from .http import Headers, HttpRequest, HttpResponse, parse_url
from .library.catalog import resolve_specs

log = logging.getLogger("protomon.proxy")

KEYING_MODES = ("per-client-ip", "per-proxy-credential", "single")
TLS_MODES = ("passthrough", "terminate")
HOP_BY_HOP = frozenset({
    "connection", "keep-alive", "proxy-authenticate", "proxy-authorization", "proxy-connection",
    "te", "trailer", "transfer-encoding", "upgrade",
})
BLOCK_HEADER = "X-Monitor-Block"


@dataclass(frozen=True)
class ProxyConfig:
    specs: Tuple[str, ...]
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    keying: str = "per-client-ip"
    engine: EngineConfig = field(default_factory=EngineConfig)
    log_path: Optional[str] = None  # "-" for stderr
    tls_mode: str = "passthrough"
    ca_cert: Optional[str] = None
    ca_key: Optional[str] = None
    # host -> "addr:port"; lets toy hostnames reach local servers
    resolve: Tuple[Tuple[str, str], ...] = ()
    upstream_ca: Optional[str] = None
    upstream_timeout: float = 30.0
    base_dir: Optional[str] = None

    def __post_init__(self):
        if not self.specs:
            raise ConfigError("at least one spec is required")
        if not 1 <= self.listen_port <= 65535:
            raise ConfigError(f"listen port {self.listen_port} outside 1..65535")
        if self.keying not in KEYING_MODES:
            raise ConfigError(f"keying must be one of {', '.join(KEYING_MODES)}")
        if self.tls_mode not in TLS_MODES:
            raise ConfigError(f"tls must be one of {', '.join(TLS_MODES)}")
        if self.tls_mode == "terminate" and not (self.ca_cert and self.ca_key):
            raise ConfigError("tls = terminate needs ca_cert and ca_key")


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _as_bool(key: str, value: str) -> bool:
    try:
        return _BOOL[value.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, got {value!r}") from None


def parse_config(text: str, base_dir: Optional[str] = None) -> ProxyConfig:
    """Parse ``key = value`` lines; ``spec`` and ``resolve`` may repeat."""
    specs, resolve = [], []
    engine: Dict[str, object] = {}
    kw: Dict[str, object] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip().lower().replace("-", "_"), value.strip()
        if not eq or not key:
            raise ConfigError(f"line {n}: expected key = value")
        try:
            if key == "spec":
                specs.append(value)
            elif key == "resolve":
                host, eq2, addr = value.partition("=")
                if not eq2 or ":" not in addr:
                    raise ConfigError(f"line {n}: resolve expects host=addr:port")
                resolve.append((host.strip().lower(), addr.strip()))
            elif key == "listen":
                host, _, port = value.rpartition(":")
                kw["listen_host"] = host or "127.0.0.1"
                kw["listen_port"] = int(port)
            elif key in ("keying", "tls_mode", "tls"):
                kw["keying" if key == "keying" else "tls_mode"] = value
            elif key in ("log", "ca_cert", "ca_key", "upstream_ca"):
                path = value
                if value != "-" and base_dir and not Path(value).is_absolute():
                    path = str(Path(base_dir) / value)
                kw["log_path" if key == "log" else key] = path
            elif key == "upstream_timeout":
                kw[key] = float(value)
            elif key == "placeholder_prefix":
                engine[key] = value
            elif key == "placeholder_entropy_bytes":
                engine[key] = int(value)
            elif key == "run_timeout":
                engine[key] = float(value)
            elif key in ("rewrite_headers", "rewrite_url_params", "rewrite_form_body"):
                engine[key] = _as_bool(key, value)
            else:
                raise ConfigError(f"line {n}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {n}: {exc}") from None
    try:
        eng = EngineConfig(**engine)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ProxyConfig(specs=tuple(specs), engine=eng, resolve=tuple(resolve), base_dir=base_dir, **kw)


def load_config(path) -> ProxyConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path.parent))


# -- TLS material -------------------------------------------------------------

def generate_ca(common_name: str = "protomon local CA", days: int = 365) -> Tuple[bytes, bytes]:
    """Self-signed CA certificate and key, PEM encoded."""
    from cryptography import x509
    from cryptography.hazmat.primitives import hashes, serialization
    from cryptography.hazmat.primitives.asymmetric import ec
    from cryptography.x509.oid import NameOID

    key = ec.generate_private_key(ec.SECP256R1())
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
    now = _dt.datetime.now(_dt.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(name).issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - _dt.timedelta(days=1))
        .not_valid_after(now + _dt.timedelta(days=days))
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .add_extension(x509.KeyUsage(
            digital_signature=True, key_cert_sign=True, crl_sign=True, content_commitment=False,
            key_encipherment=False, data_encipherment=False, key_agreement=False,
            encipher_only=False, decipher_only=False), critical=True)
        .sign(key, hashes.SHA256())
    )
    return (cert.public_bytes(serialization.Encoding.PEM),
            key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8,
                              serialization.NoEncryption()))


class LeafMinter:
    """Issues per-host server certificates signed by the configured CA."""

    def __init__(self, ca_cert_path: str, ca_key_path: str):
        from cryptography import x509
        from cryptography.hazmat.primitives import serialization

        try:
            self._ca = x509.load_pem_x509_certificate(Path(ca_cert_path).read_bytes())
            self._ca_key = serialization.load_pem_private_key(Path(ca_key_path).read_bytes(), None)
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"unusable CA material: {exc}") from None
        self._dir = tempfile.TemporaryDirectory(prefix="protomon-leaf-")
        self._contexts: Dict[str, ssl.SSLContext] = {}
        self._lock = threading.Lock()

    def context_for(self, host: str) -> ssl.SSLContext:
        with self._lock:
            ctx = self._contexts.get(host)
            if ctx is None:
                ctx = self._contexts[host] = self._mint(host)
            return ctx

    def _mint(self, host: str) -> ssl.SSLContext:
        from cryptography import x509
        from cryptography.hazmat.primitives import hashes, serialization
        from cryptography.hazmat.primitives.asymmetric import ec
        from cryptography.x509.oid import NameOID

        key = ec.generate_private_key(ec.SECP256R1())
        try:
            alt = x509.IPAddress(ipaddress.ip_address(host))
        except ValueError:
            alt = x509.DNSName(host)
        now = _dt.datetime.now(_dt.timezone.utc)
        cert = (
            x509.CertificateBuilder()
            .subject_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, host[:64])]))
            .issuer_name(self._ca.subject)
            .public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - _dt.timedelta(hours=1))
            .not_valid_after(now + _dt.timedelta(days=30))
            .add_extension(x509.SubjectAlternativeName([alt]), critical=False)
            .sign(self._ca_key, hashes.SHA256())
        )
        safe = "".join(c if c.isalnum() or c in ".-" else "_" for c in host)
        cert_path = Path(self._dir.name) / f"{safe}.pem"
        cert_path.write_bytes(
            cert.public_bytes(serialization.Encoding.PEM)
            + key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8,
                                serialization.NoEncryption())
        )
        ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        ctx.load_cert_chain(str(cert_path))
        return ctx


# -- monitor plumbing ---------------------------------------------------------

class ContextPool:
    """One MonitorContext (plus its lock) per client key."""

    def __init__(self, automaton: Automaton, engine: EngineConfig, vlog=None):
        self.automaton = automaton
        self.engine = engine
        self.vlog = vlog
        self._contexts: Dict[str, Tuple[MonitorContext, threading.Lock]] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> Tuple[MonitorContext, threading.Lock]:
        with self._lock:
            entry = self._contexts.get(key)
            if entry is None:
                ctx = MonitorContext(self.automaton, self.engine, context_id=key, log=self.vlog)
                entry = self._contexts[key] = (ctx, threading.Lock())
            return entry

    def __len__(self) -> int:
        return len(self._contexts)


def block_page(reason: str, detail: str = "") -> bytes:
    return (
        "<!doctype html><title>Request blocked</title>"
        "<h1>Request blocked by the protocol monitor</h1>"
        f"<p>Reason: <code>{html.escape(reason)}</code></p>"
        + (f"<p>{html.escape(detail)}</p>" if detail else "")
    ).encode("utf-8")


def _client_key(mode: str, client_ip: str, headers) -> str:
    if mode == "single":
        return "single"
    if mode == "per-proxy-credential":
        return "cred:" + (headers.get("Proxy-Authorization") or "anonymous")
    return "ip:" + client_ip


class _Handler(BaseHTTPRequestHandler):
    server_version = "protomon"
    protocol_version = "HTTP/1.1"
    tunnel: Optional[Tuple[str, int]] = None  # set on handlers serving a terminated tunnel
    tunnel_key: Optional[str] = None

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.client_address[0], fmt % args)

    # every method goes through the same path
    def do_GET(self):
        self._proxy()

    do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = do_OPTIONS = do_GET

    def _read_body(self) -> Optional[bytes]:
        if "chunked" in (self.headers.get("Transfer-Encoding") or "").lower():
            chunks = []
            while True:
                size = int(self.rfile.readline().split(b";")[0].strip() or b"0", 16)
                if size == 0:
                    while self.rfile.readline() not in (b"\r\n", b"\n", b""):
                        pass
                    break
                chunks.append(self.rfile.read(size))
                self.rfile.readline()
            return b"".join(chunks)
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else None

    def _send(self, status: int, headers, body: Optional[bytes], reason: Optional[str] = None):
        self.send_response(status, reason)
        for k, v in headers:
            if k.lower() not in HOP_BY_HOP and k.lower() != "content-length":
                self.send_header(k, v)
        body = body or b""
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD" and body:
            self.wfile.write(body)

    def _proxy(self):
        srv: MonitorServer = self.server  # type: ignore[assignment]
        try:
            if self.tunnel:
                host, port = self.tunnel
                netloc = host if port == 443 else f"{host}:{port}"
                url = parse_url(f"https://{netloc}{self.path}")
            else:
                url = parse_url(self.path)
        except MalformedUrl as exc:
            self._send(400, [("Content-Type", "text/plain")], f"bad request target: {exc}\n".encode())
            return
        body = self._read_body()
        headers = Headers((k, v) for k, v in self.headers.items() if k.lower() not in HOP_BY_HOP)
        req = HttpRequest(self.command, url, headers, body)
        key = self.tunnel_key or _client_key(srv.config.keying, self.client_address[0], self.headers)
        ctx, lock = srv.pool.get(key)

        with lock:
            verdict = ctx.on_request(req)
        if verdict.blocked:
            self._send(403, [(BLOCK_HEADER, verdict.reason or "blocked"),
                             ("Content-Type", "text/html; charset=utf-8"),
                             ("Cache-Control", "no-store")],
                       block_page(verdict.reason or "blocked", verdict.transition or ""))
            return
        out: HttpRequest = verdict.event  # type: ignore[assignment]
        try:
            status, reason, up_headers, up_body = srv.forward(out)
        except (OSError, http.client.HTTPException) as exc:
            self._send(502, [("Content-Type", "text/plain")], f"upstream error: {exc}\n".encode())
            return
        resp = HttpResponse(status, out.url, Headers(up_headers), up_body or None, reason=reason)
        with lock:
            rv = ctx.on_response(resp)
        if rv.blocked:
            self._send(403, [(BLOCK_HEADER, rv.reason or "blocked"),
                             ("Content-Type", "text/html; charset=utf-8")],
                       block_page(rv.reason or "blocked", rv.transition or ""))
            return
        final: HttpResponse = rv.event  # type: ignore[assignment]
        self._send(final.status, final.headers, final.body, reason)

    def do_CONNECT(self):
        srv: MonitorServer = self.server  # type: ignore[assignment]
        host, _, port_s = self.path.rpartition(":")
        try:
            port = int(port_s)
        except ValueError:
            self._send(400, [], b"bad CONNECT target\n")
            return
        host = host.strip("[]").lower()
        if srv.config.tls_mode == "terminate":
            self._terminate(host, port)
            return
        try:
            upstream = socket.create_connection(srv.upstream_address(host, port), srv.config.upstream_timeout)
        except OSError as exc:
            self._send(502, [], f"cannot reach {host}:{port}: {exc}\n".encode())
            return
        self.send_response(200, "Connection Established")
        self.end_headers()
        self.wfile.flush()
        _splice(self.connection, upstream)
        self.close_connection = True

    def _terminate(self, host: str, port: int):
        srv: MonitorServer = self.server  # type: ignore[assignment]
        self.send_response(200, "Connection Established")
        self.end_headers()
        self.wfile.flush()
        key = _client_key(srv.config.keying, self.client_address[0], self.headers)
        try:
            tls = srv.minter.context_for(host).wrap_socket(self.connection, server_side=True)
        except (ssl.SSLError, OSError) as exc:
            log.info("TLS handshake with client failed for %s: %s", host, exc)
            self.close_connection = True
            return
        handler = type("_TunnelHandler", (_Handler,), {"tunnel": (host, port), "tunnel_key": key})
        try:
            handler(tls, self.client_address, srv)
        finally:
            try:
                tls.close()
            except OSError:
                pass
        self.close_connection = True


def _splice(a: socket.socket, b: socket.socket) -> None:
    socks = [a, b]
    try:
        while True:
            readable, _, broken = select.select(socks, [], socks, 60)
            if broken or not readable:
                return
            for s in readable:
                data = s.recv(65536)
                if not data:
                    return
                (b if s is a else a).sendall(data)
    except OSError:
        return
    finally:
        b.close()


class MonitorServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, config: ProxyConfig, automaton: Optional[Automaton] = None, vlog=None):
        self.config = config
        self.automaton = automaton or compose(resolve_specs(config.specs, config.base_dir))
        self._log_stream = None
        if vlog is None and config.log_path:
            if config.log_path == "-":
                vlog = VerdictLog(sys.stderr)
            else:
                try:
                    self._log_stream = open(config.log_path, "a", encoding="utf-8")
                except OSError as exc:
                    raise ConfigError(f"cannot open log {config.log_path}: {exc.strerror}") from None
                vlog = VerdictLog(self._log_stream)
        self.pool = ContextPool(self.automaton, config.engine, vlog)
        self.minter = LeafMinter(config.ca_cert, config.ca_key) if config.tls_mode == "terminate" else None
        self._resolve = dict(config.resolve)
        self._upstream_ssl = ssl.create_default_context(cafile=config.upstream_ca)
        super().__init__((config.listen_host, config.listen_port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def upstream_address(self, host: str, port: int) -> Tuple[str, int]:
        mapped = self._resolve.get(host) or self._resolve.get(f"{host}:{port}")
        if mapped:
            addr, _, p = mapped.rpartition(":")
            return addr, int(p)
        return host, port

    def forward(self, req: HttpRequest):
        url = req.url
        port = url.port or (443 if url.scheme == "https" else 80)
        addr, aport = self.upstream_address(url.host, port)
        timeout = self.config.upstream_timeout
        if url.scheme == "https":
            conn = http.client.HTTPSConnection(url.host, port, timeout=timeout, context=self._upstream_ssl)
            # dial the mapped address but keep SNI and name checks on the real host
            raw = socket.create_connection((addr, aport), timeout)
            conn.sock = self._upstream_ssl.wrap_socket(raw, server_hostname=url.host)
        else:
            conn = http.client.HTTPConnection(addr, aport, timeout=timeout)
        try:
            conn.putrequest(req.method, url.target, skip_host=True, skip_accept_encoding=True)
            conn.putheader("Host", url.netloc)
            for k, v in req.headers:
                if k.lower() not in ("host", "content-length"):
                    conn.putheader(k, v)
            if req.body is not None or req.method in ("POST", "PUT", "PATCH"):
                conn.putheader("Content-Length", str(len(req.body or b"")))
            conn.putheader("Connection", "close")
            conn.endheaders(req.body)
            r = conn.getresponse()
            body = r.read()
            headers = [(k, v) for k, v in r.getheaders() if k.lower() not in HOP_BY_HOP]
            return r.status, r.reason, headers, body
        finally:
            conn.close()

    def server_close(self):
        super().server_close()
        if self._log_stream:
            self._log_stream.close()


def start(config: ProxyConfig, automaton: Optional[Automaton] = None, vlog=None) -> MonitorServer:
    """Bind and serve on a background thread; call ``shutdown()`` to stop."""
    srv = MonitorServer(config, automaton, vlog)
    threading.Thread(target=srv.serve_forever, name="protomon-proxy", daemon=True).start()
    return srv


def serve(config: ProxyConfig) -> None:
    """Run in the foreground until interrupted."""
    srv = MonitorServer(config)
    log.info("listening on %s:%d (%s, %s)", config.listen_host, srv.port, config.keying, config.tls_mode)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
