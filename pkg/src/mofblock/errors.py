"""Exception hierarchy shared by all modules."""


class MofBlockError(Exception):
    """Base class for package errors."""


class LatticeError(MofBlockError, ValueError):
    pass


class InvalidAngleTripleError(LatticeError):
    """The three cell angles do not close into a cell of positive volume."""


class DegenerateLatticeError(LatticeError):
    pass


class SingularLatticeError(LatticeError):
    pass


class NiggliConvergenceError(LatticeError):
    pass


class UnknownElementError(MofBlockError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown element"


class AssemblyError(MofBlockError, ValueError):
    """Pose/block count mismatch or invalid partition."""


class SpeciesMismatchError(MofBlockError, ValueError):
    pass


class LengthMismatchError(MofBlockError, ValueError):
    pass


class EmptySequenceError(MofBlockError, ValueError):
    pass


class EmptyBlockListError(MofBlockError, ValueError):
    pass


class SchemaViolationError(MofBlockError, ValueError):
    def __init__(self, message, record_id=None, line=None):
        super().__init__(message)
        self.record_id = record_id
        self.line = line


class ParseError(MofBlockError, ValueError):
    """A model response could not be turned into a prediction.

    ``kind`` is one of ``KINDS``; ``offset`` is the byte offset (UTF-8) into
    the response where the problem was detected.
    """

    KINDS = (
        "malformed-number",
        "missing-field",
        "index-gap",
        "count-mismatch",
        "empty",
        "range-error",
    )

    def __init__(self, kind: str, offset: int, message: str):
        if kind not in self.KINDS:
            raise ValueError(f"unknown parse error kind {kind!r}")
        super().__init__(f"{kind} at byte {offset}: {message}")
        self.kind = kind
        self.offset = offset
        self.message = message
