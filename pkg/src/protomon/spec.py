"""Typed model of XML protocol specifications, with parser and validator.

Document shape::

    <Specification name="...">
      <Protocol> (Request | Response | Branch)* </Protocol>
      <Identifiers> <Definition id=".."><Source/><Regexp/></Definition>* </Identifiers>
      <Policy> (Secrecy | Integrity)* </Policy>
    </Specification>

``Branch`` holds two or more ``Path`` children and must close the sequence
it appears in, so the flow is always a tree.
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple, Union

from . import regex as rx
from .errors import (
    DuplicateIdentifierError,
    SpecStructureError,
    UnknownTagError,
    UnresolvedReferenceError,
    XmlSyntaxError,
)

REQUEST = "request"
RESPONSE = "response"

REF_RE = re.compile(r"\$\{([^}]*)\}")
_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_SINGLE_REF_RE = re.compile(r"^\$\{([A-Za-z_][A-Za-z0-9_.\-]*)\}$")


def references(text: str) -> List[str]:
    return REF_RE.findall(text)


@dataclass(frozen=True)
class Pattern:
    """``any`` (presence only), ``literal`` template, or ``regex`` template."""

    kind: str = "any"
    text: str = ""

    @property
    def refs(self) -> List[str]:
        return references(self.text)


ANY = Pattern()


@dataclass(frozen=True)
class FieldPattern:
    name: Optional[str]  # None for the endpoint
    pattern: Pattern = ANY
    id: Optional[str] = None


@dataclass(frozen=True)
class MessagePattern:
    direction: str
    desc: str = ""
    method: Optional[str] = None
    endpoint: Optional[FieldPattern] = None
    parameters: Tuple[FieldPattern, ...] = ()
    headers: Tuple[FieldPattern, ...] = ()

    @property
    def fields(self) -> Tuple[FieldPattern, ...]:
        head = (self.endpoint,) if self.endpoint is not None else ()
        return head + self.parameters + self.headers

    @property
    def ids(self) -> List[str]:
        return [f.id for f in self.fields if f.id]


@dataclass(frozen=True)
class Branch:
    paths: Tuple[Tuple["FlowNode", ...], ...]


FlowNode = Union[MessagePattern, Branch]


@dataclass(frozen=True)
class IdentifierDefinition:
    id: str
    source: str
    regexp: str


@dataclass(frozen=True)
class SecrecyPolicy:
    target: str
    origins: Tuple[str, ...]

    @property
    def target_id(self) -> str:
        return _SINGLE_REF_RE.match(self.target).group(1)


@dataclass(frozen=True)
class IntegrityPolicy:
    target: str
    matches: Pattern

    @property
    def target_id(self) -> str:
        return _SINGLE_REF_RE.match(self.target).group(1)


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    flow: Tuple[FlowNode, ...]
    definitions: Tuple[IdentifierDefinition, ...] = ()
    secrecy_policies: Tuple[SecrecyPolicy, ...] = ()
    integrity_policies: Tuple[IntegrityPolicy, ...] = ()

    def messages(self) -> List[MessagePattern]:
        return [s.message for s in flow_sites(self.flow)]

    def identifiers(self) -> List[str]:
        out = [i for m in self.messages() for i in m.ids]
        return out + [d.id for d in self.definitions]


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    location: str = ""

    def __str__(self) -> str:
        where = f" at {self.location}" if self.location else ""
        return f"{self.severity}[{self.code}]{where}: {self.message}"


# -- flow positions -----------------------------------------------------------

@dataclass(frozen=True)
class FlowSite:
    """One message of the flow tree; ``key`` numbers sites in document order."""

    key: int
    message: MessagePattern
    parent: Optional[int]
    path: Tuple[int, ...] = field(default=())  # keys from the root down to here
    leaf: bool = False
    location: str = ""


def flow_sites(flow: Tuple[FlowNode, ...]) -> List[FlowSite]:
    sites: List[FlowSite] = []

    def walk(seq, parent, path, loc):
        counts: Dict[str, int] = {}
        for i, node in enumerate(seq):
            tag = "Branch" if isinstance(node, Branch) else node.direction.capitalize()
            counts[tag] = counts.get(tag, 0) + 1
            here = f"{loc}/{tag}[{counts[tag]}]"
            if isinstance(node, Branch):
                for j, sub in enumerate(node.paths):
                    walk(sub, parent, path, f"{here}/Path[{j + 1}]")
                return
            key = len(sites)
            leaf = i == len(seq) - 1
            sites.append(FlowSite(key, node, parent, path + (key,), leaf, here))
            parent, path = key, path + (key,)

    walk(flow, None, (), "Protocol")
    return sites


def is_ancestor_or_self(sites: List[FlowSite], a: Optional[int], b: Optional[int]) -> bool:
    """True when site ``a`` lies on the root path of site ``b`` (None is the root)."""
    if a is None:
        return True
    if b is None:
        return False
    return a in sites[b].path


@dataclass
class ScopeInfo:
    """Where every identifier is introduced, plus scope diagnostics."""

    sites: List[FlowSite]
    site_of: Dict[str, Optional[int]]
    # definitions evaluated on the edge into each site, declaration order
    definitions_at: Dict[Optional[int], List[IdentifierDefinition]]
    diagnostics: List[Diagnostic]


def analyze_scopes(spec: ProtocolSpec) -> ScopeInfo:
    sites = flow_sites(spec.flow)
    site_of: Dict[str, Optional[int]] = {}
    diags: List[Diagnostic] = []

    def err(code, msg, loc=""):
        diags.append(Diagnostic("error", code, msg, loc))

    for s in sites:
        for f in s.message.fields:
            if f.id:
                site_of[f.id] = s.key

    # a definition sits at the deepest site among its sources; definitions
    # may only use definitions declared before them
    definitions_at: Dict[Optional[int], List[IdentifierDefinition]] = {}
    for d in spec.definitions:
        loc = f"Identifiers/Definition[{d.id}]"
        deepest: Optional[int] = None
        for r in references(d.source) + references(d.regexp):
            if r not in site_of:
                err("scope", f"${{{r}}} referenced before introduction", loc)
                continue
            cand = site_of[r]
            if is_ancestor_or_self(sites, deepest, cand):
                deepest = cand
            elif not is_ancestor_or_self(sites, cand, deepest):
                err("no-common-position",
                    f"sources of {d.id!r} are introduced on different branches", loc)
        site_of[d.id] = deepest
        definitions_at.setdefault(deepest, []).append(d)

    # back-references inside message patterns must come from strict ancestors
    # or from an earlier component of the same message
    for s in sites:
        local: List[str] = []
        for f in s.message.fields:
            for ref in f.pattern.refs:
                if ref in local:
                    continue
                if ref not in site_of or site_of[ref] == s.key \
                        or not is_ancestor_or_self(sites, site_of[ref], s.parent):
                    err("scope", f"${{{ref}}} referenced before introduction", s.location)
            if f.id:
                local.append(f.id)

    def check_in_scope(ref, at, loc, what):
        if ref not in site_of:
            err("scope", f"{what} ${{{ref}}} referenced before introduction", loc)
            return
        where = site_of[ref]
        if is_ancestor_or_self(sites, where, at):
            return
        if at is None or is_ancestor_or_self(sites, at, where):
            err("scope", f"{what} ${{{ref}}} is introduced later in the flow", loc)
        else:
            err("no-common-position",
                f"{what} ${{{ref}}} shares no common flow position with the target", loc)

    for i, p in enumerate(spec.secrecy_policies, 1):
        loc = f"Policy/Secrecy[{i}]"
        at = site_of.get(p.target_id)
        if at is None or sites[at].message.direction != RESPONSE:
            err("secret-origin", "secret must originate in a response", loc)
        for o in p.origins:
            for r in references(o):
                check_in_scope(r, at, loc, "origin")

    for i, p in enumerate(spec.integrity_policies, 1):
        loc = f"Policy/Integrity[{i}]"
        at = site_of.get(p.target_id)
        if at is None:
            err("integrity-target", f"target ${{{p.target_id}}} is not bound by any message", loc)
        for r in p.matches.refs:
            check_in_scope(r, at, loc, "matches operand")

    return ScopeInfo(sites, site_of, definitions_at, diags)


def validate_spec(spec: ProtocolSpec) -> List[Diagnostic]:
    diags: List[Diagnostic] = []
    if not spec.flow:
        diags.append(Diagnostic("error", "empty-flow", "protocol flow is empty", "Protocol"))

    def check_branches(seq, loc):
        for node in seq:
            if isinstance(node, Branch):
                if len(node.paths) < 2:
                    diags.append(Diagnostic("error", "branch", "Branch needs at least two Path children", loc))
                for j, path in enumerate(node.paths, 1):
                    if not path:
                        diags.append(Diagnostic("error", "branch", f"Path[{j}] is empty", loc))
                    check_branches(path, f"{loc}/Path[{j}]")

    check_branches(spec.flow, "Protocol")

    info = analyze_scopes(spec)
    return diags + info.diagnostics


# -- XML parsing --------------------------------------------------------------

_ATTRS = {
    "Specification": {"name"},
    "Protocol": set(),
    "Request": {"method", "desc"},
    "Response": {"desc"},
    "Branch": set(),
    "Path": set(),
    "Endpoint": {"id"},
    "Parameter": {"name", "id"},
    "Header": {"name", "id"},
    "Regexp": set(),
    "Identifiers": set(),
    "Definition": {"id"},
    "Source": set(),
    "Policy": set(),
    "Secrecy": set(),
    "Integrity": set(),
    "Target": set(),
    "Origin": set(),
    "Matches": set(),
}


class _Parser:
    def __init__(self):
        self.declared: Dict[str, str] = {}
        self.refs: List[Tuple[str, str]] = []

    def check(self, el: ET.Element, loc: str, allowed_children=()) -> None:
        if el.tag not in _ATTRS:
            raise UnknownTagError(f"unknown tag <{el.tag}>", loc)
        extra = set(el.attrib) - _ATTRS[el.tag]
        if extra:
            raise SpecStructureError(f"unexpected attribute(s) {sorted(extra)} on <{el.tag}>", loc)
        for child in el:
            if child.tag not in _ATTRS:
                raise UnknownTagError(f"unknown tag <{child.tag}>", f"{loc}/{child.tag}")
            if child.tag not in allowed_children:
                raise SpecStructureError(f"<{child.tag}> not allowed inside <{el.tag}>", loc)

    def declare(self, ident: str, loc: str) -> None:
        if not _ID_RE.match(ident):
            raise SpecStructureError(f"bad identifier {ident!r}", loc)
        if ident in self.declared:
            raise DuplicateIdentifierError(
                f"identifier {ident!r} already declared at {self.declared[ident]}", loc)
        self.declared[ident] = loc

    def text(self, el: ET.Element, loc: str) -> str:
        t = (el.text or "").strip()
        for r in references(t):
            self.refs.append((r, loc))
        return t

    def regex(self, el: ET.Element, loc: str) -> str:
        self.check(el, loc)
        t = self.text(el, loc)
        rx.compile_pattern(REF_RE.sub("", t), loc)
        return t

    def pattern(self, el: ET.Element, loc: str) -> Pattern:
        self.check(el, loc, ("Regexp",))
        regexps = el.findall("Regexp")
        own = (el.text or "").strip()
        if regexps:
            if len(regexps) > 1 or own or any((c.tail or "").strip() for c in el):
                raise SpecStructureError(f"<{el.tag}> mixes text and <Regexp>", loc)
            return Pattern("regex", self.regex(regexps[0], f"{loc}/Regexp"))
        if own:
            return Pattern("literal", self.text(el, loc))
        return ANY

    def field(self, el: ET.Element, loc: str, named: bool) -> FieldPattern:
        name = el.get("name")
        if named and not name:
            raise SpecStructureError(f"<{el.tag}> requires a name attribute", loc)
        if named:
            loc = f"{loc[:loc.rfind('[')]}[{name}]"
        pat = self.pattern(el, loc)
        ident = el.get("id")
        if ident is not None:
            self.declare(ident, loc)
        return FieldPattern(name, pat, ident)

    def message(self, el: ET.Element, loc: str) -> MessagePattern:
        is_req = el.tag == "Request"
        allowed = ("Endpoint", "Parameter", "Header") if is_req else ("Endpoint", "Header")
        self.check(el, loc, allowed)
        endpoints = el.findall("Endpoint")
        if len(endpoints) > 1:
            raise SpecStructureError("at most one <Endpoint> per message", loc)
        endpoint = self.field(endpoints[0], f"{loc}/Endpoint", False) if endpoints else None
        params = tuple(self.field(c, f"{loc}/Parameter[{i}]", True)
                       for i, c in enumerate(el.findall("Parameter"), 1))
        headers = tuple(self.field(c, f"{loc}/Header[{i}]", True)
                        for i, c in enumerate(el.findall("Header"), 1))
        method = el.get("method")
        return MessagePattern(
            direction=REQUEST if is_req else RESPONSE,
            desc=el.get("desc", ""),
            method=method.upper() if method else None,
            endpoint=endpoint,
            parameters=params,
            headers=headers,
        )

    def sequence(self, el: ET.Element, loc: str) -> Tuple[FlowNode, ...]:
        self.check(el, loc, ("Request", "Response", "Branch"))
        out: List[FlowNode] = []
        counts: Dict[str, int] = {}
        children = list(el)
        for i, child in enumerate(children):
            counts[child.tag] = counts.get(child.tag, 0) + 1
            here = f"{loc}/{child.tag}[{counts[child.tag]}]"
            if child.tag == "Branch":
                if i != len(children) - 1:
                    raise SpecStructureError("<Branch> must be the last element of its sequence", here)
                self.check(child, here, ("Path",))
                paths = tuple(self.sequence(p, f"{here}/Path[{j}]")
                              for j, p in enumerate(child.findall("Path"), 1))
                out.append(Branch(paths))
            else:
                out.append(self.message(child, here))
        return tuple(out)

    def single_ref(self, el: ET.Element, loc: str) -> str:
        self.check(el, loc)
        t = self.text(el, loc)
        if not _SINGLE_REF_RE.match(t):
            raise SpecStructureError(f"<{el.tag}> must be a single ${{id}} reference, got {t!r}", loc)
        return t

    def one(self, el: ET.Element, tag: str, loc: str) -> ET.Element:
        found = el.findall(tag)
        if len(found) != 1:
            raise SpecStructureError(f"expected exactly one <{tag}>", loc)
        return found[0]

    def spec(self, root: ET.Element) -> ProtocolSpec:
        loc = "Specification"
        if root.tag != "Specification":
            if root.tag not in _ATTRS:
                raise UnknownTagError(f"unknown tag <{root.tag}>", root.tag)
            raise SpecStructureError(f"root must be <Specification>, got <{root.tag}>", root.tag)
        self.check(root, loc, ("Protocol", "Identifiers", "Policy"))
        name = root.get("name")
        if not name:
            raise SpecStructureError("<Specification> requires a name attribute", loc)
        flow = self.sequence(self.one(root, "Protocol", loc), "Protocol")

        definitions = []
        for ids in root.findall("Identifiers"):
            self.check(ids, "Identifiers", ("Definition",))
            for d in ids.findall("Definition"):
                dloc = f"Identifiers/Definition[{d.get('id')}]"
                self.check(d, dloc, ("Source", "Regexp"))
                ident = d.get("id")
                if not ident:
                    raise SpecStructureError("<Definition> requires an id attribute", dloc)
                self.declare(ident, dloc)
                source = self.text(self.one(d, "Source", dloc), f"{dloc}/Source")
                self.check(self.one(d, "Source", dloc), f"{dloc}/Source")
                regexp = self.regex(self.one(d, "Regexp", dloc), f"{dloc}/Regexp")
                definitions.append(IdentifierDefinition(ident, source, regexp))

        secrecy, integrity = [], []
        for pol in root.findall("Policy"):
            self.check(pol, "Policy", ("Secrecy", "Integrity"))
            for i, s in enumerate(pol.findall("Secrecy"), 1):
                sloc = f"Policy/Secrecy[{i}]"
                self.check(s, sloc, ("Target", "Origin"))
                target = self.single_ref(self.one(s, "Target", sloc), f"{sloc}/Target")
                origins = []
                for o in s.findall("Origin"):
                    self.check(o, f"{sloc}/Origin")
                    origins.append(self.text(o, f"{sloc}/Origin"))
                if not origins:
                    raise SpecStructureError("<Secrecy> needs at least one <Origin>", sloc)
                secrecy.append(SecrecyPolicy(target, tuple(origins)))
            for i, g in enumerate(pol.findall("Integrity"), 1):
                gloc = f"Policy/Integrity[{i}]"
                self.check(g, gloc, ("Target", "Matches"))
                target = self.single_ref(self.one(g, "Target", gloc), f"{gloc}/Target")
                matches = self.pattern(self.one(g, "Matches", gloc), f"{gloc}/Matches")
                integrity.append(IntegrityPolicy(target, matches))

        for ref, rloc in self.refs:
            if ref not in self.declared:
                raise UnresolvedReferenceError(f"${{{ref}}} does not name a declared identifier", rloc)
        return ProtocolSpec(name, flow, tuple(definitions), tuple(secrecy), tuple(integrity))


def parse_spec(xml: Union[bytes, str]) -> ProtocolSpec:
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        line, col = exc.position
        raise XmlSyntaxError(str(exc), f"line {line}, column {col}") from None
    return _Parser().spec(root)


def load_spec(path) -> ProtocolSpec:
    with open(path, "rb") as fh:
        return parse_spec(fh.read())


# -- canonical serializer -----------------------------------------------------

def _pattern_el(parent: ET.Element, tag: str, pat: Pattern, attrs: dict) -> None:
    el = ET.SubElement(parent, tag, {k: v for k, v in attrs.items() if v is not None})
    if pat.kind == "regex":
        ET.SubElement(el, "Regexp").text = pat.text
    elif pat.kind == "literal":
        el.text = pat.text


def _flow_el(parent: ET.Element, seq: Tuple[FlowNode, ...]) -> None:
    for node in seq:
        if isinstance(node, Branch):
            b = ET.SubElement(parent, "Branch")
            for path in node.paths:
                _flow_el(ET.SubElement(b, "Path"), path)
            continue
        attrs = {"desc": node.desc}
        if node.direction == REQUEST and node.method:
            attrs = {"method": node.method, "desc": node.desc}
        m = ET.SubElement(parent, node.direction.capitalize(), attrs)
        if node.endpoint is not None:
            _pattern_el(m, "Endpoint", node.endpoint.pattern, {"id": node.endpoint.id})
        for p in node.parameters:
            _pattern_el(m, "Parameter", p.pattern, {"name": p.name, "id": p.id})
        for h in node.headers:
            _pattern_el(m, "Header", h.pattern, {"name": h.name, "id": h.id})


def serialize_spec(spec: ProtocolSpec) -> bytes:
    root = ET.Element("Specification", {"name": spec.name})
    _flow_el(ET.SubElement(root, "Protocol"), spec.flow)
    if spec.definitions:
        ids = ET.SubElement(root, "Identifiers")
        for d in spec.definitions:
            de = ET.SubElement(ids, "Definition", {"id": d.id})
            ET.SubElement(de, "Source").text = d.source
            ET.SubElement(de, "Regexp").text = d.regexp
    if spec.secrecy_policies or spec.integrity_policies:
        pol = ET.SubElement(root, "Policy")
        for s in spec.secrecy_policies:
            se = ET.SubElement(pol, "Secrecy")
            ET.SubElement(se, "Target").text = s.target
            for o in s.origins:
                ET.SubElement(se, "Origin").text = o
        for g in spec.integrity_policies:
            ge = ET.SubElement(pol, "Integrity")
            ET.SubElement(ge, "Target").text = g.target
            _pattern_el(ge, "Matches", g.matches, {})
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True)


def iter_messages(seq: Tuple[FlowNode, ...]) -> Iterator[MessagePattern]:
    for node in seq:
        if isinstance(node, Branch):
            for path in node.paths:
                yield from iter_messages(path)
        else:
            yield node
