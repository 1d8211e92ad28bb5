"""Exception hierarchy shared by all blenderlab modules.

Every error carries an ``exit_code`` so the command-line layer can map
failures onto its fixed exit-code contract without string matching.
"""


class BlenderLabError(Exception):
    exit_code = 1


class PreconditionError(BlenderLabError, ValueError):
    exit_code = 2


class ParseError(PreconditionError):
    exit_code = 2


# root finding and periodic points
class NonConvergence(BlenderLabError):
    exit_code = 1


class DegreeCapExceeded(BlenderLabError):
    exit_code = 3


# planar geometry
class Collinear(PreconditionError):
    pass


class SumNonzero(PreconditionError):
    pass


# vertical neighborhoods and graph transform
class PostcriticalObstruction(BlenderLabError):
    exit_code = 4


class ExpansionTooWeak(BlenderLabError):
    exit_code = 4


class BranchJump(BlenderLabError):
    exit_code = 1


class NoAdmissibleBlock(BlenderLabError):
    exit_code = 1

    def __init__(self, message, step=None, margins=None):
        super().__init__(message)
        self.step = step
        self.margins = margins


# renormalization
class OrbitBroken(BlenderLabError):
    exit_code = 2


class WrongRegime(BlenderLabError):
    exit_code = 4


class NoneFound(BlenderLabError):
    exit_code = 4

    def __init__(self, message, census=None):
        super().__init__(message)
        self.census = census or {}


# gallery
class IndeterminacyHit(PreconditionError):
    pass


class IndeterminacyDetected(PreconditionError):
    pass


class SearchFailed(BlenderLabError):
    exit_code = 4

    def __init__(self, message, census=None):
        super().__init__(message)
        self.census = census or {}


class BallsOverlap(BlenderLabError):
    exit_code = 1
