"""Exception hierarchy shared by all solvers."""


class LyapkitError(Exception):
    """Base class for every error raised by lyapkit."""


class SingularMatrix(LyapkitError):
    def __init__(self, msg, row=None):
        super().__init__(msg)
        self.row = row


class SingularProjectedSystem(LyapkitError):
    """The projected shifted matrix is singular (``-p`` is a Ritz value)."""


class RankDeficientLS(LyapkitError):
    pass


class EigFailure(LyapkitError):
    pass


class BreakdownError(LyapkitError):
    """A basis block lost rank; deflation is not supported."""


class NoStableShift(LyapkitError):
    pass


class NotSPD(LyapkitError):
    pass


class _PartialResult(LyapkitError):
    """Iteration cap hit; carries whatever the solver produced so far."""

    def __init__(self, msg, Z=None, report=None, status=None):
        super().__init__(msg)
        self.Z = Z
        self.report = report
        self.status = status


class MaxSpaceReached(_PartialResult):
    pass


class MaxIterReached(_PartialResult):
    pass
