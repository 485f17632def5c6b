class DatasetParseError(ValueError):
    """A container file could not be parsed."""


class DimensionError(ValueError):
    """Array shapes do not chain."""


class InvariantError(ValueError):
    """A data invariant (e.g. every sample keeps a view) is violated."""


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


class TrainingDiverged(RuntimeError):
    """A loss term became non-finite during training."""
