"""Off-chain contract compliance checking with a simulated on-chain payment contract."""

from .chain_sim import ChainSimulator, LatencyPolicy
from .checker import Checker, CheckerConfig, ContractEnded
from .contract_model import (ContractGraph, EventRecord, Verdict, build_reference_contract,
                             initial_state, step, validate_graph)
from .seqgen import FailureModel, derive_retry_bound, enumerate_sequences

__version__ = "0.1.0"

__all__ = [
    "ChainSimulator", "Checker", "CheckerConfig", "ContractEnded", "ContractGraph",
    "EventRecord", "FailureModel", "LatencyPolicy", "Verdict", "build_reference_contract",
    "derive_retry_bound", "enumerate_sequences", "initial_state", "step", "validate_graph",
]
