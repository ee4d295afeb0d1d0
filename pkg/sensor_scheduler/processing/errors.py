class SchedulingError(Exception):
    pass


class InvalidCovarianceError(SchedulingError, ValueError):
    pass


class InvalidEpsilonError(SchedulingError, ValueError):
    pass


class InfeasibleBudgetError(SchedulingError, ValueError):
    pass


class DuplicateSelectionError(SchedulingError, ValueError):
    pass


class InstanceTooLargeError(SchedulingError, ValueError):
    pass


class InvalidParamsError(SchedulingError, ValueError):
    pass


class InvalidTripletError(SchedulingError, ValueError):
    pass


class ConfigError(SchedulingError, ValueError):
    pass


class BoundViolationError(SchedulingError):
    pass
