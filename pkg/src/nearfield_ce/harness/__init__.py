"""Datasets, metrics, sweeps and the command-line interface."""
