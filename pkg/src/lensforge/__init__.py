"""Realise prescribed return maps as Hamiltonian flows and inject chaos
into periodic-orbit neighbourhoods of integrable systems."""

__version__ = "0.1.0"
