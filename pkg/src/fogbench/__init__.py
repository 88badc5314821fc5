"""fogbench: a desk-scale benchmark harness for fog data-processing systems.

Models a volcano-monitoring sensor network: sensors at six sites feed
gateways over degraded radio links, gateways feed an on-premise inference
node, and annotated records land in a cloud time-series store queried by
offline-analysis clients. The harness is seed-deterministic and ships an
analytical model that doubles as an oracle for simulation output.
"""

__version__ = "0.1.0"
