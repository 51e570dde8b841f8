"""Federated fine-tuning simulator with server-side adaptive optimizers and
energy, utilisation and communication cost accounting for edge devices."""

__version__ = "0.1.0"
