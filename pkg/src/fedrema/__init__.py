"""Deterministic federated-learning simulator with adaptive classifier
collaboration (FedReMa) and Local/FedAvg/FedPer-style baselines."""

from fedrema.backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
