"""gridflex: TSO-DSO coordination simulator.

Day-ahead zonal clearing with unit commitment, four coordination schemes
for congestion management and balancing over meshed transmission and
distribution grids, and a scenario harness for sensitivity and replication
studies with tabular reporting.
"""

__version__ = "0.1.0"
