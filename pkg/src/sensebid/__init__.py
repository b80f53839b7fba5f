"""Service-constrained procurement auction simulator for crowd sensing.

Offline and online reverse-auction mechanisms over coverage value
functions, scenario generators, a property-test harness (truthfulness,
individual rationality, service feasibility, frugality), and an
experiment CLI.
"""

from .backend import BACKEND
from .core import (
    AuctionOutcome,
    Decision,
    DeclaredProfile,
    NonMonotoneSelection,
    PaymentLoopInfeasible,
    ServiceInfeasible,
    StageRecord,
    UserProfile,
    declare,
    utility,
    validate_outcome,
)
from .valuefn import CoverageValueFn, TaskUniverse, check_submodular

__version__ = "0.1.0"

__all__ = [
    "AuctionOutcome",
    "BACKEND",
    "CoverageValueFn",
    "Decision",
    "DeclaredProfile",
    "NonMonotoneSelection",
    "PaymentLoopInfeasible",
    "ServiceInfeasible",
    "StageRecord",
    "TaskUniverse",
    "UserProfile",
    "check_submodular",
    "declare",
    "utility",
    "validate_outcome",
]
