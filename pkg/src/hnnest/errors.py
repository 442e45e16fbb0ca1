"""Exception types raised across the package."""


class HnnError(Exception):
    """Base class for all package errors."""


class NonFinite(HnnError, FloatingPointError):
    """NaN or Inf encountered in an input or an intermediate result."""


class SingularAfterRidge(HnnError, ArithmeticError):
    """Symmetric factorization failed even after adding the ridge."""


class RankDeficient(HnnError, ArithmeticError):
    """Lifted constraint rows are linearly dependent."""


class NotIdentifiable(HnnError, ArithmeticError):
    """The negated weight matrix is not positive definite."""


class ZeroCurvature(HnnError, ValueError):
    """Curvature infimum is zero, so no rate/radius can be computed."""


class DimMismatch(HnnError, ValueError):
    pass


class InvalidBox(HnnError, ValueError):
    pass


class ZeroRow(HnnError, ValueError):
    pass


class BadThresholds(HnnError, ValueError):
    pass


class SaturationViolation(HnnError, ValueError):
    """A neuron output reached the activation bound."""


class CovarianceBlowup(HnnError, ArithmeticError):
    pass


class InnovationNonFinite(HnnError, ArithmeticError):
    pass


class ConfigError(HnnError, ValueError):
    pass


class SolverStall(HnnError, ArithmeticError):
    """An iterative solver made no descent within its iteration budget."""
