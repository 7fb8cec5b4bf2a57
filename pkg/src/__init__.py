"""
Collective Remote Attestation Simulator

Discrete-event simulation of swarm attestation protocols under configurable
adversaries, with checkers for the attestation properties of the runs.
"""

__version__ = "1.0.0"
