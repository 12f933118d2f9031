"""Transient-horizon staffing for single-server queues with Lévy input."""
