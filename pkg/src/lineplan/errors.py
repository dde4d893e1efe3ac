"""Exception hierarchy shared by all lineplan modules."""


class LinePlanError(Exception):
    """Base class for all errors raised by lineplan."""


class ParseError(LinePlanError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ValidationError(LinePlanError):
    pass


class NoPathError(LinePlanError):
    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"{s}->{t}" for s, t in self.pairs[:5])
        super().__init__(f"no path for {len(self.pairs)} OD pair(s): {shown}")


class InvalidParameter(LinePlanError, ValueError):
    pass


class NumericalError(LinePlanError):
    pass


class LevelMismatch(LinePlanError):
    pass


class PoolMismatch(LinePlanError):
    pass


class UnsupportedMeasure(LinePlanError):
    pass


class TooManyPairs(LinePlanError):
    pass


class MissingProbabilities(LinePlanError):
    pass


class Infeasible(LinePlanError):
    pass
