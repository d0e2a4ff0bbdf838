"""Simulator for anonymous private parameter estimation on GHZ sensor networks."""
from .adversary import (
    AnnounceFlip,
    AttackSpec,
    DelayedMeasurement,
    HonestAll,
    KeyLeak,
    LocalUnitary,
    MaliciousSource,
)
from .engine import OracleSettings, ProtocolConfig, RoundRecord, Transcript, run_appe, run_pe_round, run_pv_round
from .errors import InvalidArgumentError, ProtocolAbort
from .estimation import EstimationReport
from .subprotocols import RoleAssignment

__version__ = "0.1.0"
