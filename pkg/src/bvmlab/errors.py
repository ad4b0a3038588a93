"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 1 and
:class:`NumericalError` to exit code 2.
"""


class ValidationError(ValueError):
    """Invalid input: violated precondition, bad config, unknown option."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (factorization, convergence, certificate)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        detail = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} [{detail}]"
