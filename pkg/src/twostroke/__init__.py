"""Stroboscopic two-stroke quantum heat engine simulator.

Exact and gate-level stroke evolution, variational preparation of the bath
thermal states, per-cycle energetics, limit-cycle detection and operation
mode classification for a qubit chain coupled to two collisional baths.
"""

from twostroke.qmath import DensityMatrix
from twostroke.model import ChainSpec, StrokeHamiltonians, gibbs_state, stroke_hamiltonians
from twostroke.circuits import Circuit, Gate, ShotEstimate
from twostroke.engine import CycleLedger, EngineConfig, LimitCycleReport, Mode

__version__ = "0.1.0"

__all__ = [
    "ChainSpec",
    "Circuit",
    "CycleLedger",
    "DensityMatrix",
    "EngineConfig",
    "Gate",
    "LimitCycleReport",
    "Mode",
    "ShotEstimate",
    "StrokeHamiltonians",
    "gibbs_state",
    "stroke_hamiltonians",
]
