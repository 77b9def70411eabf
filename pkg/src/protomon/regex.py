"""The restricted regex dialect accepted in protocol specifications.

Supported: literals, escapes, character classes, anchors, greedy and
non-greedy quantifiers, bounded repetition, capturing and ``(?:...)``
groups. Backreferences, lookaround, named groups and inline flags are
rejected so that every pattern means the same thing on any engine.
"""
from __future__ import annotations

import re
from functools import lru_cache

from .errors import InvalidRegexError

_BACKREF_ESCAPES = set("123456789gk")
# Python-only escapes with no portable equivalent
_UNPORTABLE_ESCAPES = set("AZ")


def check_dialect(pattern: str, location: str = "") -> None:
    i, n = 0, len(pattern)
    in_class = False
    while i < n:
        c = pattern[i]
        if c == "\\":
            if i + 1 >= n:
                raise InvalidRegexError(pattern, "trailing backslash", location)
            nxt = pattern[i + 1]
            if not in_class and nxt in _BACKREF_ESCAPES:
                raise InvalidRegexError(pattern, f"backreference \\{nxt} not allowed", location)
            if nxt in _UNPORTABLE_ESCAPES:
                raise InvalidRegexError(pattern, f"escape \\{nxt} not supported", location)
            i += 2
            continue
        if in_class:
            if c == "]":
                in_class = False
            i += 1
            continue
        if c == "[":
            in_class = True
            i += 1
            # a leading ']' (or '^]') is a literal member
            if i < n and pattern[i] == "^":
                i += 1
            if i < n and pattern[i] == "]":
                i += 1
            continue
        if c == "(" and pattern.startswith("(?", i):
            if not pattern.startswith("(?:", i):
                kind = pattern[i:i + 4]
                if kind.startswith(("(?=", "(?!", "(?<=", "(?<!")):
                    reason = "lookaround not allowed"
                elif kind.startswith("(?P="):
                    reason = "backreference not allowed"
                else:
                    reason = f"group syntax {kind!r} not supported"
                raise InvalidRegexError(pattern, reason, location)
        i += 1
    if in_class:
        raise InvalidRegexError(pattern, "unterminated character class", location)


@lru_cache(maxsize=4096)
def _compile(pattern: str) -> re.Pattern:
    return re.compile(pattern)


def compile_pattern(pattern: str, location: str = "") -> re.Pattern:
    check_dialect(pattern, location)
    try:
        return _compile(pattern)
    except re.error as exc:
        raise InvalidRegexError(pattern, str(exc), location) from None


def search(pattern: str, text: str):
    """Unanchored search; anchoring comes only from ``^``/``$`` in the pattern."""
    return _compile(pattern).search(text)


def first_group_or_match(m: re.Match) -> str:
    if m.re.groups:
        g = m.group(1)
        return g if g is not None else ""
    return m.group(0)
