"""Simultaneous photon, magnon and phonon blockade in a driven atom + cavity-magnomechanical system."""

__version__ = "0.1.0"
