#!/usr/bin/env python3
"""Write a fresh local CA for ``tls = terminate``.

    python3 scripts/make_ca.py --out ./ca   # writes ca.pem and ca.key

Install ca.pem as trusted in the browser profile that uses the proxy.
"""
import argparse
import os
from pathlib import Path

from protomon.proxy import generate_ca

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description="Generate a CA certificate and key for TLS termination.")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--name", default="protomon local CA")
    ap.add_argument("--days", type=int, default=365)
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cert, key = generate_ca(a.name, a.days)
    (out / "ca.pem").write_bytes(cert)
    key_path = out / "ca.key"
    key_path.write_bytes(key)
    os.chmod(key_path, 0o600)
    print(f"wrote {out / 'ca.pem'} and {key_path}")
