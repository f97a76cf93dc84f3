"""Grid-strength small-signal stability of multi-IBR systems with STATCOMs.

Pipeline: :mod:`gscr.netmodel` (Kron reduction, gSCR, participation factors),
:mod:`gscr.devices` (IBR/STATCOM admittance models), :mod:`gscr.stability`
(critical and bounding subsystems, CgSCR), :mod:`gscr.synthesis` (scheduled
STATCOM gain design), :mod:`gscr.scheduler` (online interval selection) and
:mod:`gscr.sim` (linear disturbance simulation).
"""

from .linsys import LinearSystem
from .netmodel import (Branch, GridStrengthReport, NetworkModel, OperatingCondition,
                       ReducedNetwork, grid_strength, kron_reduce, network_dynamics)

__all__ = [
    "Branch",
    "GridStrengthReport",
    "LinearSystem",
    "NetworkModel",
    "OperatingCondition",
    "ReducedNetwork",
    "grid_strength",
    "kron_reduce",
    "network_dynamics",
]

__version__ = "0.1.0"
