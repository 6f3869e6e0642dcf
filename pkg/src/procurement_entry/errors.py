"""Exception types shared across the package."""


class AuctionModelError(Exception):
    """Base class for all package errors."""


class DomainError(AuctionModelError, ValueError):
    """An argument lies outside the domain of the function."""


class ParameterError(AuctionModelError, ValueError):
    """A model parameter is outside its admissible set."""


class ConvergenceError(AuctionModelError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class SingularityError(AuctionModelError, ArithmeticError):
    """The bidding function is undefined because the win probability vanishes."""


class UndefinedOutcomeError(AuctionModelError):
    """An outcome (e.g. the expected winning bid) is undefined because the auction fails surely."""


class EquilibriumVanishedError(AuctionModelError):
    """Entry collapses to zero inside a finite-difference stencil."""


class UnidentifiedError(AuctionModelError):
    """A parameter is not identified from the available data."""


class InsufficientDataError(AuctionModelError):
    """Too few observations for the requested estimator."""


class DensityUnderflowError(AuctionModelError, ArithmeticError):
    """The estimated bid density is too small to invert the first-order condition."""
