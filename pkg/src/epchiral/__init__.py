"""Simulator for chiral state transfer around exceptional points in a
dissipative two-level quantum system with dephasing.

Everything is dimensionless with hbar = 1. For the momentum-resolved runs,
energies are in units of the recoil energy, time in inverse recoil energies,
and momentum in recoil momenta.
"""

__version__ = "0.1.0"
