"""Complex-time Hamiltonian flows of Kähler structures via truncated Lie series."""

__version__ = "0.1.0"
