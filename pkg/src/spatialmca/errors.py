"""Exception hierarchy shared by all modules."""


class SpatialMCAError(Exception):
    """Base class for every error raised by the package."""


# -- model -------------------------------------------------------------------


class ModelError(SpatialMCAError, ValueError):
    pass


class UnknownSpecies(ModelError):
    pass


class DuplicateName(ModelError):
    pass


class NoFluxTransport(ModelError):
    pass


class NonPositiveModulator(ModelError):
    pass


class MoietyNotConserved(ModelError):
    pass


# -- rate expressions --------------------------------------------------------


class RateError(SpatialMCAError):
    pass


class RateSyntaxError(RateError, ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifier(RateError, ValueError):
    def __init__(self, name: str, position: int = -1):
        super().__init__(f"unknown identifier {name!r} (at position {position})")
        self.name = name
        self.position = position


class UnboundIdentifier(RateError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no value bound for {self.name!r}"


class RateDivisionByZero(RateError, ZeroDivisionError):
    def __init__(self, position: int):
        super().__init__(f"division by zero (operator at position {position})")
        self.position = position


# -- discretization / solvers ------------------------------------------------


class TooFewCells(ModelError):
    pass


class GeometryMismatch(ModelError):
    pass


class SolverError(SpatialMCAError, RuntimeError):
    pass


class NewtonDiverged(SolverError):
    def __init__(self, iteration: int, residual: float):
        super().__init__(f"Newton iteration failed at step {iteration} (residual {residual:.3e})")
        self.iteration = iteration
        self.residual = residual


class NegativeConcentration(SolverError):
    def __init__(self, cell: int, species: str, value: float):
        super().__init__(f"negative concentration {value:.3e} for {species!r} in cell {cell}")
        self.cell = cell
        self.species = species
        self.value = value


class StepSolveFailed(SolverError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"implicit step {step} failed: {cause}")
        self.step = step
        self.cause = cause


# -- control analysis --------------------------------------------------------


class ControlError(SpatialMCAError):
    pass


class ZeroTarget(ControlError):
    """The target output vanishes at the reference state.

    The log-derivative is undefined there; ``derivative`` carries the plain
    derivative ``dg/d ln(alpha)`` so callers can still report something.
    """

    def __init__(self, value: float, derivative: float = float("nan"), modulator: str = ""):
        super().__init__(f"target is zero at the reference state (|g| = {abs(value):.3e})")
        self.value = value
        self.derivative = derivative
        self.modulator = modulator


class ProbeSolveFailed(ControlError):
    def __init__(self, modulator: str, cause: Exception):
        super().__init__(f"probe solve for {modulator!r} failed: {cause}")
        self.modulator = modulator
        self.cause = cause
