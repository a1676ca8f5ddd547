"""Exception and warning types shared across the package."""


class OmsimError(Exception):
    """Base class; ``code`` maps onto the CLI exit status."""

    exit_code = 1


class ValidationError(OmsimError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        msg = "; ".join(d.message for d in self.diagnostics) or "invalid configuration"
        super().__init__(msg)


class SingularityError(OmsimError):
    def __init__(self, message, **context):
        self.context = context
        super().__init__(message)


class IntegrationError(OmsimError):
    exit_code = 2


class ConvergenceError(OmsimError):
    exit_code = 2

    def __init__(self, message, residuals=()):
        self.residuals = list(residuals)
        super().__init__(message)


class OmsimWarning(UserWarning):
    pass
