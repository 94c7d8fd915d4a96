"""Exception hierarchy shared by all fuio modules."""


class FuioError(Exception):
    """Base class for every error raised by fuio."""


class ExprSyntaxError(FuioError, ValueError):
    """Malformed time expression.  ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset, text=""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class ExprEvalError(FuioError, ArithmeticError):
    """Evaluation failure (division by zero, overflow) at time ``t``."""

    def __init__(self, message, t):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


class DimensionError(FuioError, ValueError):
    pass


class InfeasibleDesign(FuioError):
    """Observer design conditions are not met (rank, detectability, decoupling)."""


class DivergenceError(FuioError, FloatingPointError):
    """Simulation produced a non-finite or out-of-bound state."""

    def __init__(self, message, step, t, last_finite_index):
        super().__init__(f"{message} at step {step} (t={t:.6g})")
        self.step = step
        self.t = t
        self.last_finite_index = last_finite_index
