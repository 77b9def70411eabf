import pytest
from hypothesis import given, strategies as st

from protomon.errors import (
    DuplicateIdentifierError,
    InvalidRegexError,
    SpecStructureError,
    UnknownTagError,
    UnresolvedReferenceError,
    XmlSyntaxError,
)
from protomon.library import builtin_names, builtin_xml
from protomon.spec import (
    ANY,
    RESPONSE,
    Branch,
    Pattern,
    analyze_scopes,
    parse_spec,
    serialize_spec,
    validate_spec,
)

REF_XML = builtin_xml("google-explicit-nostate")


def mini(protocol: str, identifiers: str = "", policy: str = "") -> str:
    return (f'<Specification name="t"><Protocol>{protocol}</Protocol>'
            f"{f'<Identifiers>{identifiers}</Identifiers>' if identifiers else ''}"
            f"{f'<Policy>{policy}</Policy>' if policy else ''}</Specification>")


def test_reference_structure(ref_spec):
    s = ref_spec
    assert s.name == "google-explicit-nostate"
    msgs = s.messages()
    assert [m.desc for m in msgs] == ["req_init", "resp_init", "req_code"]
    assert [m.method for m in msgs] == ["GET", None, "GET"]
    assert msgs[1].direction == RESPONSE
    assert set(s.identifiers()) == {"req_init_redirect_uri", "resp_init_location", "uri2", "uri1", "origin", "authcode"}
    assert len(s.secrecy_policies) == 1 and len(s.secrecy_policies[0].origins) == 2
    assert len(s.integrity_policies) == 1


def test_reference_whitespace_trimmed(ref_spec):
    m = ref_spec.messages()
    assert m[0].endpoint.pattern == Pattern("regex", r"https://accounts\.google\.com/o/oauth2/(?:.*?/)?auth")
    assert m[0].parameters[0].pattern == Pattern("literal", "code")
    assert m[0].parameters[1].pattern == ANY
    assert ref_spec.secrecy_policies[0].origins == ("${origin}", "https://accounts.google.com/")
    assert ref_spec.definitions[2].regexp == "[?&]code=(.*?)(?:&|$)"


def test_reference_has_no_diagnostics(ref_spec):
    assert validate_spec(ref_spec) == []


def test_reference_scope_sites(ref_spec):
    info = analyze_scopes(ref_spec)
    assert info.site_of == {"req_init_redirect_uri": 0, "resp_init_location": 1, "uri2": 2,
                            "uri1": 0, "origin": 0, "authcode": 1}


@pytest.mark.parametrize("name", builtin_names())
def test_builtin_specs_round_trip(name):
    spec = parse_spec(builtin_xml(name))
    assert parse_spec(serialize_spec(spec)) == spec
    assert [d for d in validate_spec(spec) if d.severity == "error"] == []


def test_parse_deterministic():
    assert parse_spec(REF_XML) == parse_spec(REF_XML)


def test_unresolved_reference():
    xml = mini('<Request><Endpoint><Regexp>${undefined}</Regexp></Endpoint></Request>')
    with pytest.raises(UnresolvedReferenceError):
        parse_spec(xml)


def test_duplicate_identifier():
    xml = mini('<Request><Parameter name="a" id="x"/><Parameter name="b" id="x"/></Request>')
    with pytest.raises(DuplicateIdentifierError) as ei:
        parse_spec(xml)
    assert "Parameter[b]" in ei.value.location


def test_unknown_tag_is_error():
    with pytest.raises(UnknownTagError):
        parse_spec(mini('<Request><Cookie name="a"/></Request>'))


def test_unknown_attribute_is_error():
    with pytest.raises(SpecStructureError):
        parse_spec(mini('<Request optional="yes"/>'))


def test_xml_syntax_error_has_position():
    with pytest.raises(XmlSyntaxError) as ei:
        parse_spec(b"<Specification name='x'><Protocol></Specification>")
    assert "line 1" in ei.value.location


def test_bad_regex_reported_with_location():
    with pytest.raises(InvalidRegexError) as ei:
        parse_spec(mini(r'<Request><Parameter name="a"><Regexp>(a)\1</Regexp></Parameter></Request>'))
    assert "Parameter[a]" in ei.value.location


def test_target_must_be_single_reference():
    xml = mini('<Response><Header name="L" id="x"/></Response>',
               policy="<Secrecy><Target>${x}${x}</Target><Origin>https://a.example/</Origin></Secrecy>")
    with pytest.raises(SpecStructureError):
        parse_spec(xml)


def test_secret_must_originate_in_response():
    xml = mini('<Request><Parameter name="a" id="x"/></Request>',
               policy="<Secrecy><Target>${x}</Target><Origin>https://a.example/</Origin></Secrecy>")
    diags = validate_spec(parse_spec(xml))
    assert any("secret must originate in a response" in d.message for d in diags)


def test_integrity_operand_introduced_later_is_flagged():
    # the reference spec reshaped so uri1 is derived from a message after the target's
    xml = REF_XML.decode().replace(
        "</Protocol>",
        '<Request desc="late"><Parameter name="next" id="late_uri"/></Request></Protocol>',
    ).replace("<Source> ${req_init_redirect_uri} </Source>\n            <Regexp> ^(https?://.*?)(?:\\?|$)",
              "<Source> ${late_uri} </Source>\n            <Regexp> ^(https?://.*?)(?:\\?|$)")
    spec = parse_spec(xml)
    diags = validate_spec(spec)
    assert any(d.code == "scope" and "later in the flow" in d.message for d in diags), diags


def test_pattern_backreference_to_later_message_flagged():
    xml = mini('<Request><Parameter name="a"><Regexp>${y}</Regexp></Parameter></Request>'
               '<Response><Header name="h" id="y"/></Response>')
    assert any(d.code == "scope" for d in validate_spec(parse_spec(xml)))


def test_empty_flow_flagged():
    diags = validate_spec(parse_spec('<Specification name="e"><Protocol/></Specification>'))
    assert [d.code for d in diags] == ["empty-flow"]


def test_branch_parsing_and_rules():
    xml = mini('<Request desc="a"/><Branch><Path><Response desc="b1"/></Path>'
               '<Path><Response desc="b2"/><Request desc="c2"/></Path></Branch>')
    spec = parse_spec(xml)
    assert isinstance(spec.flow[1], Branch)
    assert [m.desc for m in spec.messages()] == ["a", "b1", "b2", "c2"]
    assert validate_spec(spec) == []
    with pytest.raises(SpecStructureError):
        parse_spec(mini('<Branch><Path><Request/></Path><Path><Request/></Path></Branch><Request/>'))
    lonely = parse_spec(mini('<Request/><Branch><Path><Request/></Path></Branch>'))
    assert any(d.code == "branch" for d in validate_spec(lonely))


def test_definitions_on_different_branches_flagged():
    xml = mini('<Request/><Branch><Path><Request><Parameter name="a" id="x"/></Request></Path>'
               '<Path><Request><Parameter name="b" id="y"/></Request></Path></Branch>',
               identifiers="<Definition id='z'><Source>${x}${y}</Source><Regexp>.*</Regexp></Definition>")
    assert any(d.code == "no-common-position" for d in validate_spec(parse_spec(xml)))


_ident = st.from_regex(r"\A[a-z][a-z0-9_]{0,6}\Z")
_rx = st.sampled_from([r"[^\s]{40,}", r"^.+$", r"https://a\.example/(?:x|y)", r"[?&]code=(.*?)(?:&|$)"])
_lit = st.from_regex(r"\A[a-z0-9]{1,6}\Z")
_pat = st.one_of(st.just(ANY), _rx.map(lambda t: Pattern("regex", t)), _lit.map(lambda t: Pattern("literal", t)))


@st.composite
def generated_specs(draw):
    ids = iter(draw(st.lists(_ident, min_size=12, max_size=12, unique=True)))
    parts = []
    for i in range(draw(st.integers(1, 4))):
        if draw(st.booleans()):
            method = draw(st.sampled_from(["", ' method="GET"', ' method="POST"']))
            fields = "".join(
                f'<Parameter name="{draw(_lit)}"{f" id={chr(34)}{next(ids)}{chr(34)}" if draw(st.booleans()) else ""}>'
                + _render(draw(_pat)) + "</Parameter>"
                for _ in range(draw(st.integers(0, 2))))
            parts.append(f'<Request desc="m{i}"{method}>{fields}</Request>')
        else:
            parts.append(f'<Response desc="m{i}"><Header name="Location" id="{next(ids)}"/></Response>')
    return mini("".join(parts))


def _render(p: Pattern) -> str:
    if p.kind == "regex":
        return f"<Regexp>{p.text.replace('&', '&amp;')}</Regexp>"
    return p.text if p.kind == "literal" else ""


@given(generated_specs())
def test_serialize_round_trip_property(xml):
    spec = parse_spec(xml)
    assert parse_spec(serialize_spec(spec)) == spec
    assert parse_spec(xml) == spec
