"""Receding-horizon control of transient frequency in power networks.

Modules
-------
netcase       network and controller case files
steady_state  synchronous equilibrium, energy function and its safe level
dynamics      nonlinear plant integration and the linear prediction model
refgen        reference trajectory from the discretized safety controller
qp            operator-splitting QP solver
mpc           convexified problem and the centralized controller
partition     regions, boundary flows and the distributed controller
harness       closed-loop scenarios, metrics and reports
"""

from .netcase import NetworkCase, load_case
from .steady_state import equilibrium
from .mpc import CentralizedController, centralized_control
from .partition import DistributedController, distributed_control, load_partition
from .harness import load_scenario, run

__version__ = "0.1.0"

__all__ = [
    "NetworkCase",
    "load_case",
    "equilibrium",
    "CentralizedController",
    "centralized_control",
    "DistributedController",
    "distributed_control",
    "load_partition",
    "load_scenario",
    "run",
]
