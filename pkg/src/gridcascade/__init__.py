"""Cascading-failure simulation for coupled power/SCADA networks.

The package couples a DC quasi-steady-state cascade engine with a central
controller that only sees the grid through a damaged communication network.
Missing topology is reconstructed in two steps (island identification, then
line-outage localisation) and fed to a preventive load-shedding controller.
"""

__version__ = "0.1.0"
