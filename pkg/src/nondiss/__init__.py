"""Stable, non-dissipative graph-ODE neural layers.

Antisymmetric-weight graph networks (with and without antisymmetric spatial
coupling), Hamiltonian and port-Hamiltonian graph dynamics, a small
reverse-mode autodiff engine, synthetic long-range benchmarks, diagnostics
that check the stability theory numerically, and a CLI.
"""

__version__ = "0.1.0"
