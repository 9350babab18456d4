"""Exception hierarchy shared across the package."""


class MarginaliaError(Exception):
    """Base class for all package-specific errors."""


class InvalidEncoding(MarginaliaError):
    """Document text is not valid Unicode (e.g. contains lone surrogates)."""


class SpanOutOfBounds(MarginaliaError):
    """A span does not fit inside the document it refers to."""


class InvalidEdit(MarginaliaError):
    """An edit violates its own shape constraints (kind vs. span/text)."""


class OverlappingEdits(MarginaliaError):
    """An edit batch is unsorted or has overlapping source spans."""


class VersionMismatch(MarginaliaError):
    """An operation referenced a version that is not the expected one."""


class SessionNotFound(MarginaliaError):
    pass


class ThreadNotFound(MarginaliaError):
    pass


class FeatureDisabled(MarginaliaError):
    """The session configuration disables this interaction."""


class StorageFailure(MarginaliaError):
    """The on-disk store could not complete a read or write."""


class SchemaError(MarginaliaError):
    """Model output failed strict schema validation.

    ``position`` is the index of the offending array element, or -1 when the
    problem is with the payload as a whole.
    """

    def __init__(self, reason: str, position: int = -1):
        super().__init__(f"invalid structured output at item {position}: {reason}")
        self.reason = reason
        self.position = position


class ProviderError(MarginaliaError):
    """Base class for completion-provider failures."""


class ProviderTimeout(ProviderError):
    pass


class ProviderRefusal(ProviderError):
    """The provider returned an error response instead of a completion."""


class MockScriptExhausted(ProviderError):
    """No unconsumed scripted response matches the prompt."""
