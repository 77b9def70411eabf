"""Bundled protocol specifications.

OAuth 2.0 specs come in four paths per provider (authorization code or
implicit mode, with or without ``state``) and are named
``<provider>-<explicit|implicit>-<state|nostate>``.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Sequence, Union

from ..errors import SpecError
from ..spec import ProtocolSpec, load_spec, parse_spec

PROVIDERS = ("google", "facebook", "vk")
OAUTH_PATHS = ("implicit-state", "implicit-nostate", "explicit-state", "explicit-nostate")
SAML_SPEC = "saml-sp-redirect-post"
GIGYA_SPEC = "gigya-facebook-explicit"

# more specific first: requests carrying ``state`` must reach the +state
# branch, and implicit requests must not be swallowed by explicit specs
# that leave ``response_type`` unconstrained
DEFAULT_ORDER = tuple(f"{p}-{path}" for p in PROVIDERS for path in OAUTH_PATHS) + (SAML_SPEC,)


def _spec_dir():
    return resources.files(__package__) / "specs"


@lru_cache(maxsize=None)
def _load_builtin(name: str) -> ProtocolSpec:
    res = _spec_dir() / f"{name}.xml"
    if not res.is_file():
        raise KeyError(name)
    return parse_spec(res.read_bytes())


def builtin_names() -> List[str]:
    return sorted(p.name[:-4] for p in _spec_dir().iterdir() if p.name.endswith(".xml"))


def builtin_specs() -> Dict[str, ProtocolSpec]:
    """Every bundled spec by name; default composition order first."""
    names = list(DEFAULT_ORDER) + [n for n in builtin_names() if n not in DEFAULT_ORDER]
    return {n: _load_builtin(n) for n in names}


def builtin_spec(name: str) -> ProtocolSpec:
    return _load_builtin(name[:-4] if name.endswith(".xml") else name)


def builtin_xml(name: str) -> bytes:
    return (_spec_dir() / f"{name}.xml").read_bytes()


def resolve_spec(ref: Union[str, Path], base: Union[str, Path, None] = None) -> ProtocolSpec:
    """Load ``ref`` as a file path (relative to ``base`` if given) or a builtin name."""
    candidates = [Path(ref)]
    if base is not None:
        candidates.insert(0, Path(base) / ref)
    for path in candidates:
        if path.is_file():
            return load_spec(path)
    try:
        return builtin_spec(str(ref))
    except KeyError:
        raise SpecError(f"no spec file or builtin spec named {str(ref)!r}") from None


def resolve_specs(refs: Sequence[Union[str, Path]], base=None) -> List[ProtocolSpec]:
    return [resolve_spec(r, base) for r in refs]
