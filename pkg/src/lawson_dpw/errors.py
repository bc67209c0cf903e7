"""Exception hierarchy shared by all modules.

Each exception carries an ``exit_code`` used by the command-line front end:
2 for bad input, 3 for numerical failures and 4 for non-convergence.
"""


class LawsonError(Exception):
    exit_code = 3


class InputError(LawsonError):
    exit_code = 2


class NumericError(LawsonError):
    exit_code = 3


# loopalg
class NotTraceFree(InputError):
    pass


class PoleAtZero(InputError):
    pass


class NotHermitianMetric(InputError):
    pass


# fuchsian
class BadModulus(InputError):
    pass


class InvalidSignPair(InputError):
    pass


class DegenerateResidue(NumericError):
    pass


class NotStable(NumericError):
    pass


class PoleAtPuncture(InputError):
    pass


class SingularGauge(NumericError):
    pass


class ZeroE(InputError):
    pass


class CoincidentPoints(InputError):
    pass


class InvalidSystem(InputError):
    pass


# monodromy
class PathTooClose(InputError):
    pass


class StepFailure(NumericError):
    pass


# potential
class PoleAtZeroLambda(InputError):
    pass


class ZeroResidueC(InputError):
    pass


# solver
class NoConvergence(LawsonError):
    exit_code = 4


class StepUnderflow(NoConvergence):
    pass


class JacobianSingular(NumericError):
    pass


class EliminationSingular(NumericError):
    pass


# surface
class MissingUnitarization(NumericError):
    pass


class NonUnitary(NumericError):
    pass


class NonCompactAngle(InputError):
    pass


class InsufficientSamples(InputError):
    pass
