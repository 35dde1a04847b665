"""D2D power allocation benchmark.

Compares three allocators on random interference networks: the iterative
WMMSE solver, a generic message-passing GNN, and a GNN whose layers unroll
the WMMSE iterations.
"""

__version__ = "0.1.0"
