"""Exception hierarchy shared by every xduct module."""


class XductError(Exception):
    """Base class for all errors raised by xduct."""


class ShapeError(XductError, ValueError):
    pass


class DomainError(XductError, ValueError):
    pass


class ArgumentError(XductError, ValueError):
    pass


class NonFiniteError(XductError, FloatingPointError):
    pass


class ContractError(XductError, ValueError):
    """A caller broke an interface contract (e.g. feeding a plain decoder)."""


class ConfigError(XductError, ValueError):
    pass


class EncodingError(XductError, ValueError):
    pass


class DataFormatError(XductError, ValueError):
    """Malformed input file; the message carries path and line number."""


class SizeError(XductError, ValueError):
    pass


class CheckpointError(XductError, IOError):
    pass
