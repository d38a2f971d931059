"""Compatibility-aware budget-feasible incentive mechanisms for multi-requester federated learning."""
from .care_co import run_care_co
from .care_no import run_care_no
from .model import Assignment, Instance, Outcome, Requester, Worker, parse_instance, serialize_instance, validate
from .pea import run_pea

__all__ = [
    "Assignment",
    "Instance",
    "Outcome",
    "Requester",
    "Worker",
    "parse_instance",
    "run_care_co",
    "run_care_no",
    "run_pea",
    "serialize_instance",
    "validate",
]
