"""Cluster bootstrap, serializability checking and benchmarks."""
