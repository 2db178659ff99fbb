"""Exception hierarchy shared by all modules."""


class BlockQuadError(Exception):
    """Base class for every error raised by this package."""


class RankDeficient(BlockQuadError):
    """A block lost column rank; ``column`` is the 0-based offending column."""

    def __init__(self, column, value=None):
        self.column = column
        self.value = value
        msg = f"rank deficiency at column {column}"
        if value is not None:
            msg += f" (|R_jj| = {value:.3e})"
        super().__init__(msg)


class NonSymmetric(BlockQuadError):
    pass


class NotPositiveDefinite(BlockQuadError):
    pass


class SingularShift(BlockQuadError):
    """The shifted block-tridiagonal matrix is (numerically) singular."""


class DimensionMismatch(BlockQuadError):
    pass


class InvalidSpec(BlockQuadError):
    pass


class ParseError(BlockQuadError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class NonSquare(BlockQuadError):
    pass


class EmptyGraph(BlockQuadError):
    pass


class NotStieltjes(BlockQuadError):
    """Extraction produced a non-s.p.d. floor; ``index`` is 1-based."""

    def __init__(self, index, detail=""):
        self.index = index
        super().__init__(f"Stieltjes parameter gamma_{index} is not s.p.d. {detail}".strip())


class NonPositiveShift(BlockQuadError):
    pass


class EigFailure(BlockQuadError):
    pass


class TooLarge(BlockQuadError):
    pass


class InvalidSpectrum(BlockQuadError):
    pass
