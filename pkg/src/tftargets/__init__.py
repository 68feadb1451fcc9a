"""Time-frequency training targets and objective functions for speech enhancement."""

from .objectives import ALL_OBJECTIVES, OBJECTIVE_NAMES, LossContext, ObjectiveId

__version__ = "0.1.0"
__all__ = ["ALL_OBJECTIVES", "OBJECTIVE_NAMES", "LossContext", "ObjectiveId"]
