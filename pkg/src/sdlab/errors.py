"""Exception types shared across the package."""


class SdlabError(Exception):
    """Base class for all sdlab errors."""


class RangeViolation(SdlabError):
    """A model parameter is outside its admissible range."""

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"parameter {field!r} violates constraint: {constraint}")


class EmptyMass(SdlabError):
    """Initial data integrates to zero; the problem requires positive mass."""


class BoundViolation(SdlabError):
    """A sampled field value lies outside [0, M]."""


class NonpositiveData(SdlabError):
    """An operation requiring strictly positive samples received a zero or negative one."""


class GridMismatch(SdlabError):
    """Two fields that must share a grid do not."""


class InvalidCorridor(SdlabError):
    """Corridor edges are inconsistent (delta >= m_bar, or data outside the corridor)."""


class DeltaOutOfRange(SdlabError):
    """Mollification width outside the admissible interval (0, 1/12)."""


class ConfigError(SdlabError):
    """A run configuration file is missing, malformed, or inconsistent."""


class SolverFault(SdlabError):
    """Base class for failures raised while integrating."""


class NewtonDiverged(SolverFault):
    """Newton iteration failed to reach the residual tolerance."""


class NonFiniteState(SolverFault):
    """The solution state contains NaN or infinity."""


class StabilityViolation(SolverFault):
    """Explicit step size violates the parabolic stability bound."""


class ScheduleDiverged(SolverFault):
    """Corridor lower edge underflowed the configured floor; the run cannot continue."""


class MassCollapse(SolverFault):
    """Mass fell below half its initial value before the restart time."""


class XiNonpositive(SolverFault):
    """A solution minimum on the late time window is nonpositive (solver fault)."""
