"""Simulation toolkit for dissipative stabilization of collective-spin
cat states in a cavity, from the microscopic pump/signal/ensemble model
down to the effective two-excitation-decay dynamics."""

__version__ = "0.1.0"
