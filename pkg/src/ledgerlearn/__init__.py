"""Collaborative incremental fraud-model training recorded on a proof-of-work ledger."""
from .contracts import ContractState, Role
from .dataset import Dataset
from .ledger import Block, Chain, Entry, mine, verify_chain
from .learner import LinearModel
from .metrics import ConfusionMatrix, MetricsReport, confusion_matrix, derive_metrics
from .simnet import SimConfig, contribute, init_network, query, run_scenario

__version__ = "0.1.0"

__all__ = ["ContractState", "Role", "Dataset", "Block", "Chain", "Entry", "mine", "verify_chain",
           "LinearModel", "ConfusionMatrix", "MetricsReport", "confusion_matrix", "derive_metrics",
           "SimConfig", "contribute", "init_network", "query", "run_scenario"]
