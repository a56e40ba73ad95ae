"""gridcoord: TSO-DSO coordinated reactive power dispatch engine.

Subpackages cover the linearized unbalanced feeder model, IEEE-1547
droop-mode MILP encodings, an embedded LP/MILP solver with SOS1
branching, transmission-side Newton power flow and dispatch, recursive
least-squares estimation under limited observability, and the closed
coordination loop tying them together.
"""

__version__ = "0.1.0"
