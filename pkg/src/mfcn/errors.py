"""Error types shared across the package.

ContractError covers violated preconditions, malformed data, and broken
numerical contracts; the CLI maps it to exit code 2. UsageError covers
bad command lines (exit code 1) and AssertionFailure covers failed
report-mode assertions (exit code 3).
"""


class ContractError(ValueError):
    """A precondition, invariant, or data contract was violated."""


class UsageError(Exception):
    """Invalid command-line invocation."""


class AssertionFailure(Exception):
    """One or more enabled report assertions failed."""
