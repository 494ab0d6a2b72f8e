"""Exception types shared across the solvers."""


class CoordBeamError(Exception):
    """Base class for all library errors."""


class SingularMatrix(CoordBeamError):
    pass


class RankDeficient(CoordBeamError):
    pass


class ZeroChannel(CoordBeamError):
    pass


class ShapeMismatch(CoordBeamError, ValueError):
    pass


class NegativeSinr(CoordBeamError, ValueError):
    pass


class NonPositiveDistance(CoordBeamError, ValueError):
    pass


class NonConvergence(CoordBeamError):
    """Iterative solver hit its cap without a certificate.

    ``trace`` carries whatever per-iteration records were collected.
    """

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


class BracketFailure(CoordBeamError):
    pass


class DegenerateDirection(CoordBeamError):
    pass


class WrongDimensions(CoordBeamError, ValueError):
    pass


class SingularA(CoordBeamError):
    """D^-1 - Psi is singular: the SINR target sits on/above the feasibility boundary."""


class NegativePower(CoordBeamError):
    pass


class ZeroReference(CoordBeamError, ValueError):
    pass


class EmptySamples(CoordBeamError, ValueError):
    pass
