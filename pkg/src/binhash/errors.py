"""Exception types shared across the package."""


class BinhashError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(BinhashError):
    """Operands have incompatible or invalid dimensions."""


class ContractError(BinhashError):
    """An input violates a documented precondition (e.g. non-sign code entries)."""


class FormatError(BinhashError):
    """A file does not conform to its binary/text format.

    ``offset`` is the byte position at which the problem was detected,
    or None when no single position applies.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataGenerationError(BinhashError):
    """Synthetic world generation could not satisfy its guarantees."""


class MiningError(BinhashError):
    """Pair mining could not produce the required pairs."""


class InitError(BinhashError):
    """Model initialization is impossible for the given data/code length."""


class DivergenceError(BinhashError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, message: str, k: int, t: int, epoch: int, batch: int):
        super().__init__(f"{message} (outer={k}, inner={t}, epoch={epoch}, batch={batch})")
        self.k = k
        self.t = t
        self.epoch = epoch
        self.batch = batch


class ProtocolError(BinhashError):
    """The evaluation protocol cannot be applied (e.g. no eligible queries)."""


class UnknownIdError(BinhashError, KeyError):
    """An image or model id is not present in the containing structure."""

    def __str__(self) -> str:  # KeyError wraps the message in quotes
        return BinhashError.__str__(self)


class ConfigError(BinhashError):
    """A configuration file or value is invalid."""
