"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A precondition on an argument was violated."""


class SingularityError(InvalidArgumentError):
    """A closed form was evaluated at a pole."""


class UncorrectableError(InvalidArgumentError):
    """The observed error rate is too large to invert the bit-flip mixing."""


class RevealBarrierError(RuntimeError):
    """A committed broadcast value was read before every agent committed."""


class ProtocolAbort(RuntimeError):
    """A protocol run stopped early; ``reason`` is a short machine-readable tag."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)
