"""Age of information in multihop queueing networks: simulation and analysis."""

from .distributions import DistSpec, StreamKey, DrawStream, check_nbu, sample
from .network import Network, Link, build_network, hop_decompose
from .traffic import Packet, TrafficSpec, TwoPointDelay, generate, load_trace, save_trace
from .policies import PolicySpec
from .engine import SimOutput, run, run_coupled
from .metrics import (
    AgeTrace,
    GapReport,
    Penalty,
    age_trace,
    average_peak,
    dominance_test,
    gap_report,
    lower_bound_trace,
    node_trace,
    penalty,
    time_average,
)

__version__ = "0.1.0"

__all__ = [
    "DistSpec", "StreamKey", "DrawStream", "check_nbu", "sample",
    "Network", "Link", "build_network", "hop_decompose",
    "Packet", "TrafficSpec", "TwoPointDelay", "generate", "load_trace", "save_trace",
    "PolicySpec", "SimOutput", "run", "run_coupled",
    "AgeTrace", "GapReport", "Penalty", "age_trace", "average_peak", "dominance_test",
    "gap_report", "lower_bound_trace", "node_trace", "penalty", "time_average",
]
