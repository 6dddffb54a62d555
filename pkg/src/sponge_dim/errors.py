"""Exception types shared by the library and the command line front end."""

from __future__ import annotations


class SpongeError(Exception):
    """Base class for all library errors."""


class ValidationError(SpongeError, ValueError):
    """Malformed input: bad map data, parameters outside their domain, bad config."""


class BudgetExceeded(SpongeError):
    """An enumeration would exceed its configured size budget."""


class SearchFailed(SpongeError):
    """A parameter search ran out of budget; ``best`` holds the closest candidate."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
