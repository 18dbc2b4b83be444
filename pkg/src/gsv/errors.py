"""Exception types raised across the toolkit."""


class GsvError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(GsvError, ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(GsvError, ValueError):
    """A binary file or payload does not follow its declared layout."""


class CodecError(GsvError, ValueError):
    """A coded payload could not be decoded (corruption, truncation, desync)."""


class StreamError(GsvError, RuntimeError):
    """A streaming session failed (unreachable server, bad endpoint)."""
