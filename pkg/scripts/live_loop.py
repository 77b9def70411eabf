#!/usr/bin/env python3
"""Toy IdP, RP and tracker behind the monitoring proxy on localhost.

Runs a benign login and a forged callback, then prints what each party saw.

    python3 scripts/live_loop.py
"""
import sys

from protomon.livedemo import demo

if __name__ == "__main__":
    sys.exit(demo())
