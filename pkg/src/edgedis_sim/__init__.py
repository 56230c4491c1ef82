"""Simulator and benchmark harness for cloud-to-edge data dissemination."""

from .config import SCHEMES, SimConfig, make_world
from .metrics import CostLedger, RunResult, completion_time, cost_of, overhead_of
from .model import DataSpec, Kind, Message, NodeState, Role, majority, partition, wire_bytes
from .runner import run, simulate
from .simnet import FaultPlan, Simulator, Stalled, Topology, build_topology, sample_delay

__all__ = [
    "SCHEMES",
    "CostLedger",
    "DataSpec",
    "FaultPlan",
    "Kind",
    "Message",
    "NodeState",
    "Role",
    "RunResult",
    "SimConfig",
    "Simulator",
    "Stalled",
    "Topology",
    "build_topology",
    "completion_time",
    "cost_of",
    "majority",
    "make_world",
    "overhead_of",
    "partition",
    "run",
    "sample_delay",
    "simulate",
    "wire_bytes",
]
