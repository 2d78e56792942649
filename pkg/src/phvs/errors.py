"""Exception types shared across the package."""


class PhvsError(Exception):
    """Base class for all library errors."""


class RingMismatch(PhvsError):
    """Operands belong to different residue rings."""


class NonUnit(PhvsError):
    """A unit was required but the residue is divisible by p."""


class NotASquare(PhvsError):
    """No valid square root mod p was supplied for a Hensel lift."""


class NotPrimitive(PhvsError):
    """Character is induced from a smaller modulus where a primitive one is required."""


class ArityMismatch(PhvsError):
    """Polynomial arity does not match the supplied data."""


class PolyParseError(PhvsError):
    """Malformed polynomial text."""


class NonUnitValue(PhvsError):
    """A polynomial value that must be a unit is divisible by p."""


class SingularHessian(PhvsError):
    """Log-Hessian matrix is singular mod p (flags a bad prime for the instance)."""


class DegenerateCritical(PhvsError):
    """Critical point has singular Hessian mod p; Newton lifting is not applicable."""


class DegenerateCriticalFound(PhvsError):
    """A chart scan found a degenerate critical point: the prime is outside the
    validity range of the closed form and is reported as bad, not asserted."""


class NoUnitCoefficient(PhvsError):
    """Linear form has no unit coefficient, so the hyperplane cannot be solved."""


class BudgetExceeded(PhvsError):
    """Requested enumeration exceeds the configured term budget."""

    def __init__(self, needed: int, budget: int):
        super().__init__(f"sum needs {needed} terms, budget is {budget}")
        self.needed = needed
        self.budget = budget


class DegreeDivisible(PhvsError):
    """p divides the degree d, so the homogeneous factorization does not apply."""


class EvenModulus(PhvsError):
    """Composite modulus must be odd."""


class NotBernsteinPair(PhvsError):
    """f_dual(grad) applied to f^{s+1} is not a constant multiple of f^s."""


class BadPrime(PhvsError):
    """The prime is flagged bad for the instance; closed forms are not asserted."""
