"""Closed-loop simulation with a high-gain observer."""

from sim.closed_loop import ClosedLoopSimulator, ObserverConfig, Trajectory

__all__ = ["ClosedLoopSimulator", "ObserverConfig", "Trajectory"]
