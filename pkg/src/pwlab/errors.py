"""Exception hierarchy shared across the package.

Every failure mode surfaced by the public API maps to one of these classes,
so callers (and the CLI) can distinguish bad input, bad configuration, and
numerical breakdown without string matching.
"""


class PwlabError(Exception):
    """Base class for all package errors."""


class SymbolSyntaxError(PwlabError):
    """Malformed symbol expression text; carries the offending position."""

    def __init__(self, message, position, text=None):
        self.position = position
        self.text = text
        super().__init__(f"{message} (at position {position})")


class DimensionError(PwlabError):
    """Variable index exceeds the declared spatial dimension."""


class EvalError(PwlabError):
    """Symbol not evaluable at the requested point (division by zero,
    sqrt of a negative, |xi| too close to the origin for abs/norm)."""


class DepthError(PwlabError):
    """Iterated bracket depth exceeds the configured cap."""


class NumericalError(PwlabError):
    """An underlying dense linear-algebra routine failed to converge."""


class AmbiguityError(PwlabError):
    """Eigenvalue branch continuation hit a tie that cannot be resolved."""


class ShapeError(PwlabError):
    """Field/grid shape mismatch."""


class StabilityError(PwlabError):
    """Time integration drifted beyond the allowed energy tolerance."""


class BandError(PwlabError):
    """Requested dyadic frequency band does not fit on the grid."""


class BlowupError(PwlabError):
    """A Hamiltonian trajectory left the admissible |xi| range."""


class DerivativeError(PwlabError):
    """Time derivative of the requested order is not available."""


class DegenerateFit(PwlabError):
    """All measures vanish; no decay exponent can be fitted."""


class DomainError(PwlabError):
    """Arguments outside the mathematical domain of the formula."""


class CutoffError(PwlabError):
    """Symbol has significant Fourier mass beyond the assembly cutoff."""


class WindowError(PwlabError):
    """Eigenvalue fit window reaches into the truncation-corrupted zone."""


class SizeError(PwlabError):
    """Generated system size exceeds the supported cap."""


class HyperbolicityError(PwlabError):
    """Second-order symbol fails the hyperbolicity discriminant test."""


class ConfigError(PwlabError):
    """Run configuration failed validation."""
