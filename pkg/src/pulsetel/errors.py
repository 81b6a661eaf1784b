"""Shared exception types."""


class ParameterError(ValueError):
    """A configuration or profile field is outside its allowed domain."""


class RangeError(ValueError):
    """A computed physical quantity left its plausible operating range."""


class ContractError(ValueError):
    """An operation precondition was violated (e.g. non-uniform sampling)."""
