"""Error taxonomy shared across the package.

Contract violations (bad arguments, shape mismatches) raise ContractError;
out-of-range data values raise DomainError; numerical blow-ups (NaN/Inf)
raise NumericError. The CLI maps these onto distinct exit codes.
"""


class ContractError(ValueError):
    """A precondition on an operation was violated by the caller."""


class DomainError(ContractError):
    """An input value lies outside the operation's admissible domain."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class ManifestError(ContractError):
    """A run manifest failed validation."""
