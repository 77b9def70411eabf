"""Exception hierarchy shared across the package."""


class ProtomonError(Exception):
    pass


class MalformedUrl(ProtomonError, ValueError):
    pass


class MalformedMessage(ProtomonError, ValueError):
    """Raw HTTP bytes that cannot be parsed into a request or response."""


class SpecError(ProtomonError):
    """Base class for protocol specification parse errors.

    ``location`` is a slash-separated element path inside the document,
    e.g. ``Protocol/Request[2]/Parameter[code]``.
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class XmlSyntaxError(SpecError):
    pass


class UnknownTagError(SpecError):
    pass


class DuplicateIdentifierError(SpecError):
    pass


class UnresolvedReferenceError(SpecError):
    pass


class InvalidRegexError(SpecError):
    def __init__(self, pattern: str, reason: str, location: str = ""):
        self.pattern = pattern
        super().__init__(f"invalid regex {pattern!r}: {reason}", location)


class SpecStructureError(SpecError):
    """Well-formed XML that does not follow the element grammar."""


class CompileError(ProtomonError):
    pass


class EntropyUnavailable(ProtomonError):
    pass


class ScenarioError(ProtomonError):
    pass


class ConfigError(ProtomonError):
    pass
