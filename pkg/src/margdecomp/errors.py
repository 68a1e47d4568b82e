"""Exception hierarchy.

Errors split into two families: misuse of the library (structural problems,
violated preconditions, size guards) and mathematically meaningful negative
answers (infeasible marginals, a system without the covering-integrality
property, a requirement table that is not splice-additive).  The CLI maps
the first family to exit code 1 and the second to exit code 2.
"""


class MargdecompError(Exception):
    """Base class for all library errors."""


class StructuralError(MargdecompError):
    """An input object violates its own invariants (malformed system,
    inconsistent dimensions, broken splice axiom)."""


class PreconditionError(MargdecompError):
    """Arguments are well-formed but violate an operation's precondition."""


class SizeGuardError(MargdecompError):
    """An enumeration-based routine was called beyond its size guard."""


class UnsupportedCombinationError(MargdecompError):
    """The requested combination of backend and requirement form is not
    supported (e.g. a per-path table on a system too large to enumerate)."""


class InfeasibleMarginalsError(MargdecompError):
    """The per-path necessary condition fails; carries a witness path."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotWeakMfmcError(MargdecompError):
    """The weight vector admits no convex cover decomposition, certifying
    that the system lacks the weak max-flow/min-cut property (or that the
    weights lie outside the covering polyhedron)."""

    def __init__(self, message, weights=None):
        super().__init__(message)
        self.weights = weights


class ConservationViolationError(MargdecompError):
    """The requirement table is not splice-additive; carries a witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
