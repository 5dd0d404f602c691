"""Exception hierarchy shared by all modules."""


class NoisyTreeError(Exception):
    """Base class for every error raised by this package."""


class InvalidTree(NoisyTreeError, ValueError):
    pass


class CycleDetected(InvalidTree):
    pass


class Disconnected(InvalidTree):
    pass


class DuplicateEdge(InvalidTree):
    pass


class LeafSetMismatch(NoisyTreeError, ValueError):
    pass


class ThetaOutOfRange(NoisyTreeError, ValueError):
    pass


class TreeTooLarge(NoisyTreeError, ValueError):
    pass


class StateSpaceTooLarge(NoisyTreeError, ValueError):
    pass


class SpecMismatch(NoisyTreeError, ValueError):
    pass


class DegenerateChannel(NoisyTreeError, ValueError):
    pass


class SingularMarginal(NoisyTreeError, ValueError):
    pass


class NotPositiveDefinite(NoisyTreeError, ValueError):
    pass


class AssumptionViolated(NoisyTreeError, ValueError):
    def __init__(self, condition, detail=""):
        self.condition = condition
        super().__init__(f"{condition} violated" + (f": {detail}" if detail else ""))


class EmptyBatch(NoisyTreeError, ValueError):
    pass


class DegenerateColumn(NoisyTreeError, ValueError):
    pass


class TooFewTaxa(NoisyTreeError, ValueError):
    pass


class NotReducible(NoisyTreeError, ValueError):
    pass


class ConfigError(NoisyTreeError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class AmbiguousMinimumWarning(UserWarning):
    """Two terminal edges tie for the minimum; a deterministic choice was made."""


class DegenerateClassWarning(UserWarning):
    """Equivalence class requested for a tree with no inner node."""
