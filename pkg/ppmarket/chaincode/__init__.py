"""
Chaincode for the marketplace: the 15 externally invoked transactions.

All transaction modules should be imported here to ensure they are
registered with the contract.
"""

from .registry import Contract, Execution, TxContext, contract

# Member registration
from . import members

# Data distribution
from . import data

# Training rounds
from . import training

# Fraud tagging
from . import fraud

__all__ = [
    "Contract",
    "Execution",
    "TxContext",
    "contract",
]
