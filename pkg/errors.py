# errors.py


class PerfectSamplingError(Exception):
    """Base class for every failure raised by the sampler and its checks."""


class ContractViolation(PerfectSamplingError, ValueError):
    """A caller broke an operation's precondition."""


class UnassignedSiteError(ContractViolation):
    def __init__(self, site, operation: str = ""):
        self.site = site
        where = f" in {operation}" if operation else ""
        super().__init__(f"site {site} is unassigned (Δ){where}")


class SummabilityError(PerfectSamplingError):
    """The interaction tail does not vanish, so S_i^{>k} is not finite."""


class InconclusiveCheckError(PerfectSamplingError):
    def __init__(self, message: str, remainder: float):
        self.remainder = remainder
        super().__init__(f"{message} (remainder bound {remainder:.3e})")


class ConditionFailedError(PerfectSamplingError):
    """A quantity needs a condition (γ > 0, r < 1) that does not hold."""


class NonTerminationError(PerfectSamplingError):
    def __init__(self, max_events: int, set_size: int):
        self.max_events = max_events
        self.set_size = set_size
        super().__init__(
            f"backward sketch exceeded {max_events} events with |C| = {set_size}; "
            "the termination condition probably fails for this model"
        )


class CorruptedRecordError(PerfectSamplingError):
    """An event record does not replay to the empty set, or a forward pass read Δ."""


class ModelFileError(PerfectSamplingError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class LatticeOverflowError(PerfectSamplingError):
    """A site coordinate left the supported machine-integer range."""
