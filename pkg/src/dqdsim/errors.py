"""Exception types raised by dqdsim."""


class DQDSimError(Exception):
    """Base class for all dqdsim errors."""


class ContractViolation(DQDSimError, ValueError):
    """An input broke a documented precondition (shape, Hermiticity, trace...)."""


class DomainError(DQDSimError, ValueError):
    """A scalar argument is outside the domain of a formula."""


class ComplexEigenvaluesError(DQDSimError, ArithmeticError):
    """The closed-form eigenvalue discriminant is negative."""

    def __init__(self, discriminant: float):
        self.discriminant = discriminant
        super().__init__(
            f"eigenvalue discriminant is negative ({discriminant!r}); "
            "the closed form assumes real roots"
        )


class DegenerateEigenvaluesError(DQDSimError, ArithmeticError):
    """lambda0 == lambda1, so the two-exponential closed form is singular."""


class UndefinedSteadyStateError(DQDSimError, ArithmeticError):
    """The stationary populations are undefined for the given rates."""


class DegenerateSteadyStateError(DQDSimError, ArithmeticError):
    """The Liouvillian null space does not have dimension one."""

    def __init__(self, dimension: int):
        self.dimension = dimension
        super().__init__(f"null space has dimension {dimension}, expected 1")


class NonPhysicalFixedPointError(DQDSimError, ArithmeticError):
    """The fixed point of the generator is not positive semidefinite."""


class StiffnessError(DQDSimError, RuntimeError):
    """The adaptive integrator needed a step below its underflow limit."""
