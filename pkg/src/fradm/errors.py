"""Exception types raised by the decomposition routines."""


class DecompositionError(ValueError):
    """Base class for input and numerical errors in this package."""


class RankDeficient(DecompositionError):
    """A matrix expected to have full column rank does not."""


class NonSquare(DecompositionError):
    pass


class InvalidRank(DecompositionError):
    pass


class InvalidFraction(DecompositionError):
    pass


class ShapeMismatch(DecompositionError):
    pass


class NonFinite(DecompositionError):
    pass


class BlockRankDeficient(DecompositionError):
    """The Nystrom intersection block has numerical rank below r."""


class NotConvergedWarning(RuntimeWarning):
    """An iterative solver hit its iteration cap before its stopping rule fired.

    The solver still returns its last iterate; the result object carries
    ``converged = False``.
    """
