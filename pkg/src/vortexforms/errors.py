"""Exception types shared across the package."""


class ExpressionSyntaxError(ValueError):
    """Malformed expression text. ``position`` is the 0-based character offset."""

    def __init__(self, message, text, position):
        self.text = text
        self.position = position
        super().__init__(f"{message} at offset {position}")


class UnknownIdentifierError(ValueError):
    """An identifier that is neither a declared coordinate nor a known function."""

    def __init__(self, name, position=None):
        self.name = name
        self.position = position
        where = "" if position is None else f" at offset {position}"
        super().__init__(f"unknown identifier {name!r}{where}")


class NumericalFailure(ArithmeticError):
    """A numerical operation could not produce a usable value.

    Carries whatever context the raising site has: the offending expression
    node, the evaluation point, a condition estimate.
    """

    def __init__(self, message, *, node=None, point=None, condition=None):
        self.node = node
        self.point = point
        self.condition = condition
        super().__init__(message)


class EvaluationError(NumericalFailure):
    """Domain error, division by zero or overflow while evaluating an expression."""


class IllPosedError(ValueError):
    """Raised when dynamics are requested from a sigma that failed the well-posedness test."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"sigma is ill-posed: {', '.join(report.reasons)}")
