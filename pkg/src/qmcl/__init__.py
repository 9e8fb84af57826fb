"""Quantum mechanical closure of partially resolved dynamical systems.

Learns a kernel eigenbasis, a projected shift operator and flux observables
from trajectory data, then couples the resolved classical variables to a
quantum state that supplies the unresolved flux.
"""

__version__ = "0.1.0"
