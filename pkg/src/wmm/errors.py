class WmmError(Exception):
    """Base class for estimation errors."""


class TreeValidationError(WmmError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid tree")


class EmptyPathSet(WmmError):
    """No leaf satisfies the informative-path conditions."""


class CombinatorialLimit(WmmError):
    pass


class InvalidParameter(WmmError, ValueError):
    pass


class RejectionStall(WmmError):
    """Constrained sibling sampling accepts too rarely to finish."""


class MissingBranch(WmmError, KeyError):
    pass


class EmptySupport(WmmError, ValueError):
    pass


class ConstantSeries(WmmError, ValueError):
    pass
