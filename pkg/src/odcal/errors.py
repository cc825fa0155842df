"""Exception types shared across the package.

The CLI maps these onto its exit codes (see :mod:`odcal.cli`).
"""


class OdcalError(Exception):
    """Base class for all package errors."""


class ParseError(OdcalError, ValueError):
    """An input file could not be parsed."""


class ValidationError(OdcalError, ValueError):
    """An input parsed but violates a structural invariant."""


class NoPathError(OdcalError):
    """No directed route exists between an origin and a destination zone."""

    def __init__(self, origin, destination):
        super().__init__(f"no path from zone {origin} to zone {destination}")
        self.origin = origin
        self.destination = destination


class GridlockError(OdcalError):
    """Too few simulated vehicles completed their trip within the horizon."""

    def __init__(self, completed, generated, threshold=0.5):
        frac = completed / generated if generated else 0.0
        super().__init__(
            f"gridlock: {completed}/{generated} vehicles completed "
            f"({frac:.1%} < {threshold:.0%})"
        )
        self.completed = completed
        self.generated = generated
