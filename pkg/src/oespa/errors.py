"""Exception hierarchy shared across the toolkit."""


class OespaError(Exception):
    """Base class for all toolkit errors."""


class ParseError(OespaError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class TypeCheckError(OespaError):
    pass


class EvalError(OespaError):
    """Runtime evaluation failure on a concrete state."""


class CondUndefinedError(EvalError):
    """No guard of a conditional expression is true on the given state."""


class ArithmeticEvalError(EvalError):
    pass


class IndexRangeError(EvalError):
    pass


class OpaqueFunctionError(EvalError):
    """Opaque function symbols have no numeric interpretation."""


class SubstitutionCaptureError(OespaError):
    """A substitution would capture a bound summation index."""


class InvalidSoeError(OespaError):
    pass


class NotInContextError(OespaError):
    pass


class NonterminationError(OespaError):
    def __init__(self, message, iterations=None, partial=None):
        self.iterations = iterations
        self.partial = partial
        super().__init__(message)


class InconclusiveGuardError(OespaError):
    """A loop guard test could not be decided symbolically."""

    def __init__(self, message, guard_text=None):
        self.guard_text = guard_text
        super().__init__(message)


class ContradictionError(OespaError):
    pass


class NotBipartiteError(OespaError):
    pass


class NotSolvableError(OespaError):
    def __init__(self, message, missing=None):
        self.missing = missing
        super().__init__(message)


class ResolutionRefusedError(OespaError):
    def __init__(self, message, missing=None):
        self.missing = missing
        super().__init__(message)


class IrreducibleFormulaError(OespaError):
    def __init__(self, message, position=None, reason=None):
        self.position = position
        self.reason = reason
        super().__init__(message)


class SynthesisRefusedError(OespaError):
    pass
