"""Exception hierarchy for the toolkit."""


class CatSimError(Exception):
    """Base exception with detailed information about the failing operation."""

    exit_code = 4

    def __init__(self, message, code=None, operation=None, details=None):
        self.message = message
        self.code = code
        self.operation = operation
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self):
        result = f"{self.message}"
        if self.code:
            result += f" (Code: {self.code})"
        if self.operation:
            result += f" during {self.operation}"
        return result

    def to_dict(self):
        return {
            'type': type(self).__name__,
            'message': self.message,
            'code': self.code,
            'operation': self.operation,
            'details': self.details
        }


class DomainError(CatSimError, ValueError):
    """A parameter lies outside its stated domain."""


class InvalidState(CatSimError):
    """A density matrix or pure state violates its invariants."""


class TruncationError(CatSimError):
    """The Fock truncation drops more than the allowed tail mass."""


class HeraldImpossible(CatSimError):
    """The herald click probability is numerically zero."""


class UncertaintyViolation(CatSimError):
    """Quadrature variances violate the Heisenberg bound."""


class QuadratureFailure(CatSimError):
    """Numerical integration lost normalization."""


class FitDiverged(CatSimError):
    """A curve fit did not meet its convergence criterion."""


class NoSignal(CatSimError):
    """No local-oscillator photons, so no shot noise to compare against."""


class DegenerateRates(CatSimError):
    """Trigger rate does not exceed the dark-count rate."""


class PhaseUnresolvable(CatSimError):
    """Binned variances are too uniform to assign phases."""


class IllConditionedCorrection(CatSimError):
    """Loss correction requested for an efficiency below the stable range."""


class NotConverged(CatSimError):
    """An iterative reconstruction stopped before its convergence criterion."""


class NoFit(CatSimError):
    """No modal purity reproduces the measured figures of merit."""


class DataFormatError(CatSimError):
    """An input file could not be parsed."""

    exit_code = 3


class EmptyData(CatSimError):
    """An operation received no samples."""

    exit_code = 3
