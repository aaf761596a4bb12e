"""Exception types raised across the package."""


class ContractError(ValueError):
    """An argument violates a documented precondition (shape, sign, range)."""


class InvalidParamsError(ValueError):
    """Distribution parameters violate the family invariants."""


class EstimationError(RuntimeError):
    """A Monte Carlo estimate could not be formed (e.g. non-finite Phi)."""


class SolveError(RuntimeError):
    """The Fisher system could not be solved."""


class FlowStallError(RuntimeError):
    """Step halving was exhausted; carries the last valid flow state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class RefinementError(ValueError):
    """Mesh resolution too coarse for the requested inclusions."""


class LocationError(ValueError):
    """An observation point lies outside every mesh triangle."""


class AssemblyError(RuntimeError):
    """The finite element system is singular or degenerate."""


class DegenerateCurveError(ValueError):
    """A boundary curve has vanishing tangent speed."""


class ConfigError(ValueError):
    """Experiment configuration is missing fields or malformed."""
