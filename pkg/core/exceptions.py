"""Error hierarchy for the GBSM Bounds Lab"""

from typing import Optional


class GbsmError(Exception):
    """Base class for every computation error raised by the library"""


class InvalidParameter(GbsmError, ValueError):
    """A configuration value or function argument is out of range"""


class UsageError(GbsmError):
    """Command-line usage error"""


# ---- MDP validation ----

class MdpValidationError(GbsmError):
    """An MDP violates one of its invariants"""


class NonStochasticRow(MdpValidationError):
    def __init__(self, state: int, action: int, total: float, reason: str = 'sum'):
        self.state = state
        self.action = action
        self.total = total
        if reason == 'negative':
            msg = f"transition row ({state}, {action}) has a negative entry"
        else:
            msg = f"transition row ({state}, {action}) sums to {total!r}, expected 1"
        super().__init__(msg)


class RewardOutOfRange(MdpValidationError):
    def __init__(self, state: int, action: int, value: float, reward_max: float):
        self.state = state
        self.action = action
        self.value = value
        self.reward_max = reward_max
        super().__init__(
            f"reward ({state}, {action}) = {value!r} outside [0, {reward_max!r}]"
        )


class InvalidGamma(MdpValidationError):
    def __init__(self, gamma: float):
        self.gamma = gamma
        super().__init__(f"discount factor {gamma!r} must lie in [0, 1)")


class ShapeMismatch(GbsmError):
    """Array dimensions disagree with the MDP or policy they belong to"""


class GammaMismatch(GbsmError):
    def __init__(self, gamma1: float, gamma2: float):
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        super().__init__(f"discount factors differ: {gamma1!r} vs {gamma2!r}")


class ActionSpaceMismatch(GbsmError):
    def __init__(self, actions1: int, actions2: int):
        self.actions1 = actions1
        self.actions2 = actions2
        super().__init__(f"action spaces differ: {actions1} vs {actions2}")


# ---- Transport ----

class DimensionMismatch(GbsmError):
    """Distribution lengths disagree with each other or with the cost matrix"""


class NotADistribution(GbsmError):
    def __init__(self, total: float, min_entry: float):
        self.total = total
        self.min_entry = min_entry
        super().__init__(
            f"not a probability vector (sum={total!r}, min entry={min_entry!r})"
        )


class TooLarge(GbsmError):
    def __init__(self, rows: int, cols: int, limit: int):
        self.rows = rows
        self.cols = cols
        self.limit = limit
        super().__init__(f"instance {rows}x{cols} exceeds oracle limit {limit}")


class TransportError(GbsmError):
    """The transport solver failed or was given an invalid cost matrix"""


# ---- Metric engine ----

class EmptySet(GbsmError):
    """Hausdorff distance requested for an empty cost block"""


class MaxItersExceeded(GbsmError):
    """Fixed-point iteration hit its budget; `metric` holds the best iterate"""

    def __init__(self, label: str, max_iters: int, residual: float, metric: Optional[object] = None):
        self.label = label
        self.max_iters = max_iters
        self.residual = residual
        self.metric = metric
        super().__init__(
            f"{label} did not converge in {max_iters} sweeps (residual {residual:.3e})"
        )


# ---- Approximation ----

class InvalidAggregation(GbsmError):
    """Aggregation map is not a valid surjection onto its representatives"""


class DegenerateRow(GbsmError):
    def __init__(self, state: int, action: int, retries: int):
        self.state = state
        self.action = action
        self.retries = retries
        super().__init__(
            f"row ({state}, {action}) clamped to all zeros after {retries} retries"
        )


# ---- Dataset-driven metric ----

class EmptyRepresentativeSet(GbsmError):
    """No state of the dataset meets the per-action sample threshold"""


class UncoveredStateAction(GbsmError):
    def __init__(self, state: int, action: int):
        self.state = state
        self.action = action
        super().__init__(
            f"filtering removed every sample of representative pair ({state}, {action})"
        )
