"""Exception types shared across the package."""


class MeppError(ValueError):
    """Base class for all contract violations raised by :mod:`mepp`."""


class InvalidPatternError(MeppError):
    pass


class CapacityError(MeppError):
    pass


class ContractError(MeppError):
    pass


class NotACrossItemError(MeppError):
    pass


class DegenerateInputError(MeppError):
    pass


class NoThresholdError(MeppError):
    pass


class UndefinedConditionError(MeppError):
    pass


class NotLinkableError(MeppError):
    pass


class ScenarioError(MeppError):
    pass
