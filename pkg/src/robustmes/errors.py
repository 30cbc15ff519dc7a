"""Exception types shared across the package."""


class InvalidInput(ValueError):
    pass


class InsufficientData(InvalidInput):
    pass


class SingularEfficiency(InvalidInput):
    pass


class ModelSchemaError(InvalidInput):
    """Malformed model or design document; ``path`` names the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class FormatError(InvalidInput):
    pass


class IncompleteDay(InvalidInput):
    def __init__(self, date: str, message: str = ""):
        super().__init__(message or f"day {date!r} is incomplete")
        self.date = date


class NotApplicable(ValueError):
    pass


class NotRepairable(ValueError):
    pass


class NotConverged(RuntimeError):
    """An iterative method hit its iteration cap; ``result`` carries the partial state."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result
