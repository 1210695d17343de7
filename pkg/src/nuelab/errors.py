"""Exception types shared by all modules."""


class NuelabError(Exception):
    """Base class for all package errors."""


class DomainError(NuelabError, ValueError):
    """A point or parameter lies outside its admissible domain."""


class SingularityError(NuelabError, ArithmeticError):
    """An orbit landed exactly on the singular set.

    Attributes
    ----------
    index : int
        Position along the orbit at which the hit occurred.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"orbit hits the singular set at index {self.index}")


class ConfigurationError(NuelabError, ValueError):
    """Inconsistent or incomplete configuration."""


class ContractViolation(NuelabError, ValueError):
    """An input breaks a documented precondition."""


class UnderdeterminedFit(NuelabError, ValueError):
    """Not enough usable points to fit a decay model."""


class IllDefinedNeighborhood(NuelabError, ValueError):
    """A branch pullback crosses a critical point or leaves a branch."""


class EmptyTowerError(NuelabError, ValueError):
    """The base cell carries no partition elements."""


class PoleInsideDisk(NuelabError, ValueError):
    """The generating function has a pole inside the closed unit disk."""


class ParseError(NuelabError, ValueError):
    """A configuration file could not be parsed.

    Attributes
    ----------
    line : int or None
        One-based line number of the offending entry.
    """

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
