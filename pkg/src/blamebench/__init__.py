"""Evaluation harness for local feature-attribution explanations."""

__version__ = "0.1.0"
