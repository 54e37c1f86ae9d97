"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/input problems exit
with 1, numerical failures (rank-deficient neighborhoods, singular
systems) exit with 2.
"""


class ValidationError(ValueError):
    """Invalid configuration, CLI flags, or input file contents."""


class CloudFormatError(ValidationError):
    """Malformed node-cloud text file."""


class NumericalError(RuntimeError):
    """Base class for failures of the numerical machinery."""


class UnisolvencyError(NumericalError):
    """A neighborhood cannot support the requested polynomial order.

    Carries the offending node id so the caller can report which part
    of the discretization is too sparse or degenerate.
    """

    def __init__(self, node_id: int, detail: str = ""):
        self.node_id = int(node_id)
        msg = f"unisolvency failure at node {self.node_id}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class SingularSystemError(NumericalError):
    """The assembled static system is singular (e.g. unconstrained rigid modes)."""
