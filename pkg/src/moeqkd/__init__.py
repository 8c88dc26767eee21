"""Desk-scale toolkit for monogamy-of-entanglement games, non-interactive QKD
simulations with everlasting-security experiments, and the classical-key no-go
attack, built on exact dense linear algebra."""

__version__ = "0.1.0"
