"""Exception hierarchy shared by all modules.

The CLI maps :class:`InvalidInput` to exit code 1 and :class:`NumericalFailure`
to exit code 2.
"""


class ThinTubeError(Exception):
    pass


class InvalidInput(ThinTubeError, ValueError):
    """Input data violates a documented precondition."""


class DegenerateSpectrum(InvalidInput):
    """A cross-section eigenvalue flagged as non-simple was requested."""


class WeightNonPositive(InvalidInput):
    pass


class MustProject(InvalidInput):
    """Higher sectors need a sector projector; the shifted pencil is indefinite."""


class ContractViolation(InvalidInput):
    pass


class DegenerateFreeLine(InvalidInput):
    """V vanishes identically: no vertex, the c1/c2 formulas are 0/0."""


class NumericalFailure(ThinTubeError, RuntimeError):
    pass


class ResolutionError(NumericalFailure):
    pass


class Inconclusive(NumericalFailure):
    pass
