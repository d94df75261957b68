"""Exception types shared across the package."""


class ShapeError(ValueError):
    pass


class ContractError(ValueError):
    """A precondition on an argument's value was violated."""


class GraphStateError(RuntimeError):
    pass


class UsageError(ValueError):
    """Caller combined arguments or modes in an unsupported way."""


class FormatError(ValueError):
    """A file (checkpoint, manifest, CSV) could not be parsed."""


class ParseError(FormatError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingDiverged(RuntimeError):
    def __init__(self, term: str, step: int):
        super().__init__(f"loss term {term!r} became non-finite at step {step}")
        self.term = term
        self.step = step
