"""
Protocol actors: data owners, cloud owners and model owners driven by ledger
events under a deterministic scheduler.
"""

from .base import Actor, ActorConfig, FraudStrategy
from .cloud_owner import CloudOwner
from .data_owner import DataOwner
from .model_owner import ModelOwner, mo_consensus
from .scenario import (
    ScenarioConfig,
    ScenarioResult,
    centralized_oracle,
    load_scenario,
    run_scenario,
    write_artifacts,
)
from .scheduler import Scheduler
from .verification import Check, VerificationReport, attributable, flagged_cis, verify_suite

__all__ = [
    "Actor",
    "ActorConfig",
    "FraudStrategy",
    "CloudOwner",
    "DataOwner",
    "ModelOwner",
    "mo_consensus",
    "ScenarioConfig",
    "ScenarioResult",
    "centralized_oracle",
    "load_scenario",
    "run_scenario",
    "write_artifacts",
    "Scheduler",
    "Check",
    "VerificationReport",
    "attributable",
    "flagged_cis",
    "verify_suite",
]
